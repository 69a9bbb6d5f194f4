use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use persist_walk::exponent::{estimate_b_q, estimate_b_tail, invert_phi, AsymmetryModel};
use persist_walk::montecarlo::{
    fit_exponent, skew_diagnostic, survival_a, survival_atilde, survival_atilde_on_grid, CapPolicy, RunOptions,
    SurvivalCurve, DEFAULT_GRID_RATIO, DEFAULT_STEP_CAP,
};
use persist_walk::oracle::{decimal, equivalence_check, exact_a, exact_atilde, DpOptions, DEFAULT_CAP};
use persist_walk::parallel::Workers;
use persist_walk::stable::{negativity_probability, quantile, sample_n, StableParams};
use persist_walk::{experiments, report, Barrier, IncrementDistribution, Mode};

#[derive(Parser)]
#[command(name = "persist-walk", version, about = "Persistence of the running sign-sum of random walks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form exponent phi(x, b) with kappa and psi_bar, or b for a target phi.
    Phi(PhiArgs),
    /// Draw from the alpha = 1/2 stable law Z[kappa, c].
    StableSample(StableArgs),
    /// Survival curve of the sign-sum event over time horizons.
    EstimateAtilde(AtildeArgs),
    /// Survival curve of the excursion event over excursion counts.
    EstimateA(AArgs),
    /// Estimate the relative asymmetry b of a walk.
    EstimateB(BArgs),
    /// Power-skew diagnostic of the excursion sequence.
    DiagnoseSkew(SkewArgs),
    /// Exact probabilities by dynamic programming.
    OracleDp(OracleArgs),
    /// Log-log slope of a survival curve CSV.
    Fit(FitArgs),
    /// Run a canned validation experiment.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct Common {
    /// Increment law: "simple", a shorthand, inline JSON or a JSON file.
    #[arg(long, default_value = "simple")]
    dist: String,
    /// Barrier x as p/q or a decimal in [0, 1).
    #[arg(long, default_value = "0")]
    x: Barrier,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, env = "PERSIST_WALK_SEED", default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn dist(&self) -> Result<IncrementDistribution> {
        IncrementDistribution::from_arg(&self.dist).with_context(|| format!("--dist {}", self.dist))
    }

    fn workers(&self) -> Workers {
        self.workers.map(Workers::new).unwrap_or_default()
    }

    fn options(&self, grid_ratio: f64) -> RunOptions {
        RunOptions::new(self.trials, self.seed).workers(self.workers().get()).grid_ratio(grid_ratio)
    }

    fn config(&self, command: &str, dist: &IncrementDistribution) -> serde_json::Value {
        json!({
            "command": command,
            "dist": serde_json::from_str::<serde_json::Value>(&dist.to_json()).unwrap_or_default(),
            "x": self.x.to_string(),
            "trials": self.trials,
            "seed": self.seed,
            "workers": self.workers().get(),
        })
    }
}

#[derive(Args)]
struct CurveOut {
    #[arg(long, default_value_t = DEFAULT_GRID_RATIO)]
    grid_ratio: f64,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG chart output path.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PhiArgs {
    #[arg(long)]
    x: String,
    #[arg(long, conflicts_with = "target")]
    b: Option<String>,
    /// Solve for b with phi(x, b) = target instead.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct StableArgs {
    #[arg(long, allow_hyphen_values = true)]
    kappa: String,
    #[arg(long, default_value = "1")]
    scale: String,
    #[arg(long, default_value_t = 1000)]
    n: u64,
    #[arg(long, env = "PERSIST_WALK_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Write draws here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print quantiles and the sign fraction instead of the draws.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct AtildeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 100_000)]
    t_max: u64,
    /// Explicit comma-separated horizons instead of the geometric grid.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    mode: ModeArg,
    #[command(flatten)]
    output: CurveOut,
}

#[derive(Args)]
struct AArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 1000)]
    k_max: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Weak)]
    mode: ModeArg,
    /// Steps allowed per half-excursion before a trial is capped.
    #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
    step_cap: u64,
    /// Fail instead of counting capped trials as survivors.
    #[arg(long)]
    fail_on_cap: bool,
    #[command(flatten)]
    output: CurveOut,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Tail,
    Q,
}

#[derive(Args)]
struct BArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Method::Tail)]
    method: Method,
    /// Complete excursions for the tail-ratio method.
    #[arg(long, default_value_t = 100_000)]
    excursions: u64,
    /// Excursions per trial for the q-inversion method.
    #[arg(long, default_value_t = 200)]
    n: u64,
    /// Print the full estimate with diagnostics as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SkewArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    n_grid: Vec<u64>,
    /// Also show the distance with the sign as printed, |lhs - rhs|.
    #[arg(long)]
    printed: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "simple")]
    dist: String,
    #[arg(long, default_value = "0")]
    x: Barrier,
    /// Horizon for the sign-sum event.
    #[arg(long, required_unless_present_any = ["k", "equivalence"])]
    t: Option<u64>,
    /// Excursion count for the excursion event (bracketed at --t-cap).
    #[arg(long, requires = "t_cap")]
    k: Option<u32>,
    #[arg(long)]
    t_cap: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
    /// Run the exhaustive equivalence check on simple-walk paths of this length.
    #[arg(long)]
    equivalence: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    lo: u64,
    #[arg(long)]
    hi: u64,
    /// Write the curve with fit columns appended.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Experiment id, or "all".
    #[arg(required_unless_present = "list")]
    id: Option<String>,
    #[arg(long)]
    list: bool,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for the curves produced.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Weak,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Weak => Mode::Weak,
        }
    }
}

fn parse_real(s: &str) -> Result<f64> {
    let t = s.trim();
    let v = match t.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>()? / b.trim().parse::<f64>()?,
        None => t.parse::<f64>()?,
    };
    if !v.is_finite() {
        bail!("{s:?} is not a finite number");
    }
    Ok(v)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn emit_curve(curve: &SurvivalCurve, output: &CurveOut, config: &serde_json::Value, title: &str) -> Result<()> {
    if let Some(p) = &output.out {
        let mut w = create(p)?;
        report::write_curve(&mut w, curve, config)?;
        w.flush()?;
    }
    if let Some(p) = &output.svg {
        std::fs::write(p, report::svg_chart(curve, None, title)).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn curve_summary(curve: &SurvivalCurve) -> String {
    let i = curve.len() - 1;
    format!(
        "horizon={} p_hat={} ci=[{}, {}] survivors={} trials={} capped={}",
        curve.horizons[i],
        curve.p_hat[i],
        curve.ci_low[i],
        curve.ci_high[i],
        curve.survivors[i],
        curve.trials,
        curve.capped
    )
}

fn run_phi(a: PhiArgs) -> Result<()> {
    let x = parse_real(&a.x).context("--x")?;
    if let Some(t) = a.target {
        let b = invert_phi(parse_real(&t).context("--target")?, x)?;
        println!("b={b}");
        return Ok(());
    }
    let b = parse_real(a.b.as_deref().unwrap_or("1")).context("--b")?;
    let m = AsymmetryModel::new(x, b)?;
    println!("phi={} kappa={} psi_bar={}", m.phi, m.kappa, m.psi_bar);
    Ok(())
}

fn run_stable(a: StableArgs) -> Result<()> {
    let params = StableParams::new(parse_real(&a.kappa).context("--kappa")?, parse_real(&a.scale).context("--scale")?)?;
    let workers = a.workers.map(Workers::new).unwrap_or_default();
    if a.n == 0 {
        bail!("--n must be positive");
    }
    let mut draws = sample_n(&params, a.n, a.seed, workers);
    if a.summary {
        let neg = draws.iter().filter(|&&z| z < 0.0).count() as f64 / a.n.max(1) as f64;
        draws.sort_unstable_by(f64::total_cmp);
        let qs: Vec<String> = [0.1, 0.25, 0.5, 0.75, 0.9]
            .iter()
            .map(|&q| format!("q{}={}", (q * 100.0) as u32, quantile(&draws, q)))
            .collect();
        println!(
            "n={} negative_fraction={neg} exact={} {}",
            a.n,
            negativity_probability(params.kappa())?,
            qs.join(" ")
        );
        return Ok(());
    }
    let mut w: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for d in &draws {
        writeln!(w, "{d}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_atilde(a: AtildeArgs) -> Result<()> {
    let dist = a.common.dist()?;
    let opts = a.common.options(a.output.grid_ratio);
    let mode: Mode = a.mode.into();
    let curve = match &a.horizons {
        Some(h) => {
            let mut h = h.clone();
            h.sort_unstable();
            h.dedup();
            if h.first() == Some(&0) || h.is_empty() {
                bail!("--horizons must be positive");
            }
            survival_atilde_on_grid(&dist, a.common.x, mode, &h, &opts)
        }
        None => {
            if a.t_max < 2 {
                bail!("--t-max must be at least 2");
            }
            survival_atilde(&dist, a.common.x, mode, a.t_max, &opts)
        }
    };
    let mut config = a.common.config("estimate-atilde", &dist);
    config["t_max"] = json!(curve.horizons.last());
    config["mode"] = json!(mode.to_string());
    config["grid_ratio"] = json!(a.output.grid_ratio);
    emit_curve(&curve, &a.output, &config, &format!("sign-sum survival, x = {}", a.common.x))?;
    println!("{}", curve_summary(&curve));
    Ok(())
}

fn run_a(a: AArgs) -> Result<()> {
    let dist = a.common.dist()?;
    let opts = a.common.options(a.output.grid_ratio);
    let mode: Mode = a.mode.into();
    let cap = CapPolicy { step_cap: a.step_cap, fail_on_cap: a.fail_on_cap };
    let curve = survival_a(&dist, a.common.x, mode, a.k_max, cap, &opts).context("estimate-a")?;
    let mut config = a.common.config("estimate-a", &dist);
    config["k_max"] = json!(a.k_max);
    config["mode"] = json!(mode.to_string());
    config["step_cap"] = json!(a.step_cap);
    config["grid_ratio"] = json!(a.output.grid_ratio);
    emit_curve(&curve, &a.output, &config, &format!("excursion survival, x = {}", a.common.x))?;
    println!("{}", curve_summary(&curve));
    Ok(())
}

fn run_b(a: BArgs) -> Result<()> {
    let dist = a.common.dist()?;
    let est = match a.method {
        Method::Tail => estimate_b_tail(&dist, a.excursions, a.common.seed, a.common.workers()),
        Method::Q => estimate_b_q(&dist, a.common.x, a.n, &a.common.options(DEFAULT_GRID_RATIO)),
    }
    .context("estimate-b")?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&est)?);
    } else {
        println!("b_hat={} stderr={} method={}", est.b_hat, est.stderr, serde_json::to_value(est.method)?.as_str().unwrap_or(""));
    }
    Ok(())
}

fn run_skew(a: SkewArgs) -> Result<()> {
    let dist = a.common.dist()?;
    let d = skew_diagnostic(&dist, a.common.x, &a.n_grid, &a.common.options(DEFAULT_GRID_RATIO)).context("diagnose-skew")?;
    let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
    for i in 0..d.n_grid.len() {
        print!(
            "n={} lhs={} rhs={:.6} D={} err={}",
            d.n_grid[i],
            show(d.lhs[i]),
            d.rhs[i],
            show(d.d[i]),
            show(d.d_err[i])
        );
        if a.printed {
            print!(" printed_D={}", show(d.printed_d[i]));
        }
        println!();
    }
    if d.degenerate {
        println!("degenerate: no persisting trial or n = 1 on part of the grid");
    }
    if d.capped > 0 {
        println!("capped trials: {}", d.capped);
    }
    Ok(())
}

fn run_oracle(a: OracleArgs) -> Result<()> {
    if let Some(len) = a.equivalence {
        if len > 20 {
            bail!("--equivalence supports path lengths up to 20");
        }
        let r = equivalence_check(len);
        for b in &r.barriers {
            println!(
                "x={} checked={} counterexamples={} mode_sensitive_paths={}",
                b.x, b.checked, b.counterexamples, b.mode_sensitive_paths
            );
            for c in &b.examples {
                println!("  counterexample k={} steps={:?}", c.k, c.steps);
            }
            if let Some(p) = &b.mode_sensitive_example {
                println!("  strict and weak differ on steps={p:?}");
            }
        }
        return Ok(());
    }
    let dist = IncrementDistribution::from_arg(&a.dist).with_context(|| format!("--dist {}", a.dist))?;
    let opts = DpOptions { cap: a.cap, ..Default::default() };
    if let Some(k) = a.k {
        let t_cap = a.t_cap.expect("required by clap");
        let mode = a.mode.map_or(Mode::Weak, Mode::from);
        let b = exact_a(&dist, a.x, k, t_cap, mode, opts).context("oracle-dp")?;
        println!(
            "[{}, {}] = [{}, {}]",
            b.lower,
            b.upper,
            decimal(&b.lower, 12),
            decimal(&b.upper, 12)
        );
        return Ok(());
    }
    let t = a.t.expect("required by clap");
    let mode = a.mode.map_or(Mode::Strict, Mode::from);
    let r = exact_atilde(&dist, a.x, t, mode, opts).context("oracle-dp")?;
    println!("{} = {}", r.probability, decimal(&r.probability, 12));
    Ok(())
}

fn run_fit(a: FitArgs) -> Result<()> {
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let cf = report::read_curve(BufReader::new(file)).with_context(|| format!("reading {}", a.input.display()))?;
    let fit = fit_exponent(&cf.curve, a.lo, a.hi).context("fit")?;
    if let Some(p) = &a.out {
        let config = cf
            .comments
            .iter()
            .find_map(|c| c.strip_prefix("config:"))
            .and_then(|c| serde_json::from_str(c.trim()).ok())
            .unwrap_or(json!({}));
        let mut w = create(p)?;
        report::write_fitted(&mut w, &cf.curve, &fit, &config)?;
        w.flush()?;
    }
    if let Some(p) = &a.svg {
        let title = format!("fit over [{}, {}]", a.lo, a.hi);
        std::fs::write(p, report::svg_chart(&cf.curve, Some(&fit), &title))
            .with_context(|| format!("writing {}", p.display()))?;
    }
    println!(
        "slope={} stderr={} r2={} fit_lo={} fit_hi={} points={}",
        fit.slope, fit.stderr, fit.r_squared, fit.fit_range.0, fit.fit_range.1, fit.points
    );
    Ok(())
}

fn run_reproduce(a: ReproduceArgs) -> Result<bool> {
    if a.list {
        for e in experiments::EXPERIMENTS {
            println!("{:<24} criterion {}  {}", e.id, e.criterion, e.summary);
        }
        return Ok(true);
    }
    let id = a.id.expect("required by clap");
    let ids: Vec<&str> = if id == "all" {
        experiments::EXPERIMENTS.iter().map(|e| e.id).collect()
    } else {
        vec![experiments::find(&id)?.id]
    };
    let workers = a.workers.map(Workers::new).unwrap_or_default();
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut all = true;
    for id in ids {
        let o = experiments::run(id, workers)?;
        for d in &o.details {
            println!("  {d}");
        }
        println!("{} {}", if o.passed { "PASS" } else { "FAIL" }, o.id);
        all &= o.passed;
        if let Some(dir) = &a.out_dir {
            for (name, curve) in &o.curves {
                let path = dir.join(format!("{name}.csv"));
                let mut w = create(&path)?;
                report::write_curve(&mut w, curve, &json!({"experiment": o.id, "curve": name}))?;
                w.flush()?;
            }
        }
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phi(a) => run_phi(a).map(|_| true),
        Command::StableSample(a) => run_stable(a).map(|_| true),
        Command::EstimateAtilde(a) => run_atilde(a).map(|_| true),
        Command::EstimateA(a) => run_a(a).map(|_| true),
        Command::EstimateB(a) => run_b(a).map(|_| true),
        Command::DiagnoseSkew(a) => run_skew(a).map(|_| true),
        Command::OracleDp(a) => run_oracle(a).map(|_| true),
        Command::Fit(a) => run_fit(a).map(|_| true),
        Command::Reproduce(a) => run_reproduce(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e:#}");
            ExitCode::from(2)
        }
    }
}
