//! Survival-curve estimation for the persistence events, the Γ-ratio
//! reference curve, log-log exponent fits and the power-skew diagnostic.
//!
//! Every trial produces a single "death" horizon (first violation time, or
//! first excursion count at which the partial sum goes negative). All grid
//! horizons are then served from that one number, so a trial is simulated
//! once regardless of grid size.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::barrier::{Barrier, Mode};
use crate::increments::{IncrementDistribution, IncrementSampler};
use crate::parallel::{map_chunks, map_trials, Workers};
use crate::rng::{Domain, StreamFactory};
use crate::walk::{first_violation_streaming, scaled_xi, ExcursionWalker, SampledSteps};

#[derive(Debug, Error, PartialEq)]
pub enum McError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("trial {trial}: half-excursion exceeded the step cap of {cap}")]
    HorizonOverflow { trial: u64, cap: u64 },
}

/// Default per-half-excursion step cap for excursion-horizon runs.
pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;
/// Default horizon grid ratio, `2^{1/4}`.
pub const DEFAULT_GRID_RATIO: f64 = 1.189_207_115_002_721;

/// Seed, trial count and worker pool shared by all Monte Carlo runs.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub trials: u64,
    pub seed: u64,
    pub workers: Workers,
    pub grid_ratio: f64,
}

impl RunOptions {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            workers: Workers::default(),
            grid_ratio: DEFAULT_GRID_RATIO,
        }
    }

    pub fn workers(mut self, w: usize) -> Self {
        self.workers = Workers::new(w);
        self
    }

    pub fn grid_ratio(mut self, r: f64) -> Self {
        self.grid_ratio = r;
        self
    }
}

/// Sorted, de-duplicated geometric grid `round(r^k)` on `[1, max]`, always
/// ending at `max`.
pub fn geometric_grid(max: u64, ratio: f64) -> Vec<u64> {
    assert!(ratio > 1.0, "grid ratio must exceed 1");
    let mut out = Vec::new();
    if max == 0 {
        return out;
    }
    let mut k = 0i32;
    loop {
        let h = ratio.powi(k).round() as u64;
        if h >= max {
            break;
        }
        if out.last() != Some(&h) {
            out.push(h);
        }
        k += 1;
    }
    out.push(max);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// Horizon is elapsed time `t`.
    Time,
    /// Horizon is the number of complete excursions `k`.
    Excursion,
    /// Horizon is a half-excursion length `n`.
    Duration,
}

/// 95% two-sided binomial interval: Wilson score, with the rule of three
/// when no (or every) trial succeeds.
pub fn binomial_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    if successes == 0 {
        return (0.0, (3.0 / n).min(1.0));
    }
    if successes == trials {
        return ((1.0 - 3.0 / n).max(0.0), 1.0);
    }
    let z = 1.959_963_984_540_054f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// Estimated survival probabilities on a horizon grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub kind: CurveKind,
    pub horizons: Vec<u64>,
    pub survivors: Vec<u64>,
    pub trials: u64,
    pub p_hat: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Trials cut short by the step cap (excursion curves only).
    pub capped: u64,
}

impl SurvivalCurve {
    pub fn from_counts(
        kind: CurveKind,
        horizons: Vec<u64>,
        survivors: Vec<u64>,
        trials: u64,
        capped: u64,
    ) -> Self {
        assert_eq!(horizons.len(), survivors.len());
        let mut p_hat = Vec::with_capacity(horizons.len());
        let mut ci_low = Vec::with_capacity(horizons.len());
        let mut ci_high = Vec::with_capacity(horizons.len());
        for &s in &survivors {
            p_hat.push(if trials == 0 { 0.0 } else { s as f64 / trials as f64 });
            let (lo, hi) = binomial_interval(s, trials);
            ci_low.push(lo);
            ci_high.push(hi);
        }
        Self { kind, horizons, survivors, trials, p_hat, ci_low, ci_high, capped }
    }

    pub fn len(&self) -> usize {
        self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }

    /// Survival estimate at an exact grid horizon.
    pub fn at(&self, horizon: u64) -> Option<f64> {
        self.horizons
            .iter()
            .position(|&h| h == horizon)
            .map(|i| self.p_hat[i])
    }
}

/// Histogram of death horizons against a grid: `hist[j]` counts trials that
/// survived exactly the first `j` grid horizons.
fn tally(grid: &[u64], deaths: impl Iterator<Item = u64>) -> Vec<u64> {
    let mut hist = vec![0u64; grid.len() + 1];
    for d in deaths {
        hist[grid.partition_point(|&h| h < d)] += 1;
    }
    hist
}

fn merge(parts: Vec<(Vec<u64>, u64)>, grid_len: usize) -> (Vec<u64>, u64) {
    let mut hist = vec![0u64; grid_len + 1];
    let mut capped = 0;
    for (h, c) in parts {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
        capped += c;
    }
    (hist, capped)
}

fn survivors_from_hist(hist: &[u64]) -> Vec<u64> {
    let n = hist.len() - 1;
    let mut out = vec![0u64; n];
    let mut acc = 0u64;
    for j in (0..n).rev() {
        acc += hist[j + 1];
        out[j] = acc;
    }
    out
}

/// `P(Σ_{i≤s} sgn(S_i) ⋛ x·s for all 1 ≤ s ≤ t)` on the default geometric
/// grid up to `t_max`.
pub fn survival_atilde(
    dist: &IncrementDistribution,
    x: Barrier,
    mode: Mode,
    t_max: u64,
    opts: &RunOptions,
) -> SurvivalCurve {
    survival_atilde_on_grid(dist, x, mode, &geometric_grid(t_max, opts.grid_ratio), opts)
}

/// As [`survival_atilde`] on an explicit sorted grid; trials run to the
/// last grid horizon.
pub fn survival_atilde_on_grid(
    dist: &IncrementDistribution,
    x: Barrier,
    mode: Mode,
    grid: &[u64],
    opts: &RunOptions,
) -> SurvivalCurve {
    let t_max = *grid.last().expect("non-empty grid");
    let sampler = IncrementSampler::new(dist);
    let factory = StreamFactory::new(opts.seed, Domain::Trials);
    let parts = map_chunks(opts.trials, opts.workers, |range| {
        let deaths = range.map(|i| {
            let mut src = SampledSteps::new(&sampler, factory.stream(i));
            first_violation_streaming(&mut src, x, mode, t_max).unwrap_or(u64::MAX)
        });
        (tally(grid, deaths), 0)
    });
    let (hist, _) = merge(parts, grid.len());
    SurvivalCurve::from_counts(
        CurveKind::Time,
        grid.to_vec(),
        survivors_from_hist(&hist),
        opts.trials,
        0,
    )
}

/// Step-cap policy for excursion-horizon runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CapPolicy {
    pub step_cap: u64,
    /// Return [`McError::HorizonOverflow`] instead of counting capped trials.
    pub fail_on_cap: bool,
}

impl Default for CapPolicy {
    fn default() -> Self {
        Self { step_cap: DEFAULT_STEP_CAP, fail_on_cap: false }
    }
}

/// `P(A_{k,x})` over excursion counts `k ≤ k_max`: a trial survives `k` when
/// `W_1, ..., W_k` all pass the mode's test against zero.
///
/// A trial whose half-excursion hits the step cap is counted as surviving
/// every horizon and reported in `capped`.
pub fn survival_a(
    dist: &IncrementDistribution,
    x: Barrier,
    mode: Mode,
    k_max: u64,
    cap: CapPolicy,
    opts: &RunOptions,
) -> Result<SurvivalCurve, McError> {
    let grid = geometric_grid(k_max, opts.grid_ratio);
    let sampler = IncrementSampler::new(dist);
    let factory = StreamFactory::new(opts.seed, Domain::Trials);
    let parts = map_chunks(opts.trials, opts.workers, |range| {
        let mut capped = 0u64;
        let mut first_capped = None;
        let deaths: Vec<u64> = range
            .map(|i| {
                let mut walker = ExcursionWalker::new(SampledSteps::new(&sampler, factory.stream(i)));
                let mut w = 0i128;
                for m in 1..=k_max {
                    let pos = walker.next_half(cap.step_cap);
                    if pos.capped {
                        capped += 1;
                        first_capped.get_or_insert(i);
                        return u64::MAX;
                    }
                    let neg = walker.next_half(cap.step_cap);
                    if neg.capped {
                        capped += 1;
                        first_capped.get_or_insert(i);
                        return u64::MAX;
                    }
                    w += scaled_xi(x, pos.duration, neg.duration);
                    if !mode.holds(w) {
                        return m;
                    }
                }
                u64::MAX
            })
            .collect();
        (tally(&grid, deaths.into_iter()), capped, first_capped)
    });
    if cap.fail_on_cap {
        if let Some(trial) = parts.iter().find_map(|p| p.2) {
            return Err(McError::HorizonOverflow { trial, cap: cap.step_cap });
        }
    }
    let (hist, capped) = merge(parts.into_iter().map(|p| (p.0, p.1)).collect(), grid.len());
    Ok(SurvivalCurve::from_counts(
        CurveKind::Excursion,
        grid,
        survivors_from_hist(&hist),
        opts.trials,
        capped,
    ))
}

/// Survival of the first half-excursion length, `P(τ_1 > n)` for `n ≤ n_max`.
pub fn half_excursion_survival(
    dist: &IncrementDistribution,
    n_max: u64,
    opts: &RunOptions,
) -> SurvivalCurve {
    let grid = geometric_grid(n_max, opts.grid_ratio);
    let sampler = IncrementSampler::new(dist);
    let factory = StreamFactory::new(opts.seed, Domain::Trials);
    let parts = map_chunks(opts.trials, opts.workers, |range| {
        let deaths = range.map(|i| {
            let mut walker = ExcursionWalker::new(SampledSteps::new(&sampler, factory.stream(i)));
            let h = walker.next_half(n_max + 1);
            if h.capped { u64::MAX } else { h.duration }
        });
        (tally(&grid, deaths), 0)
    });
    let (hist, _) = merge(parts, grid.len());
    SurvivalCurve::from_counts(CurveKind::Duration, grid, survivors_from_hist(&hist), opts.trials, 0)
}

/// `N_t` (complete excursions finished by time `t`) for each trial.
pub fn complete_excursions_by(dist: &IncrementDistribution, t: u64, opts: &RunOptions) -> Vec<u64> {
    let sampler = IncrementSampler::new(dist);
    let factory = StreamFactory::new(opts.seed, Domain::Trials);
    map_trials(opts.trials, opts.workers, |i| {
        let mut walker = ExcursionWalker::new(SampledSteps::new(&sampler, factory.stream(i)));
        let mut used = 0u64;
        let mut k = 0u64;
        loop {
            let a = walker.next_half(t - used + 1);
            if a.capped || used + a.duration > t {
                return k;
            }
            let b = walker.next_half(t - used - a.duration + 1);
            if b.capped || used + a.duration + b.duration > t {
                return k;
            }
            used += a.duration + b.duration;
            k += 1;
        }
    })
}

/// `Γ(k+1−φ) / (Γ(k+1)·Γ(1−φ))`, evaluated through log-Γ.
pub fn gamma_ratio(k: u64, phi: f64) -> f64 {
    let k = k as f64;
    (ln_gamma(k + 1.0 - phi) - ln_gamma(k + 1.0) - ln_gamma(1.0 - phi)).exp()
}

/// Weighted least-squares fit of `ln p̂` against `ln h`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub fit_range: (u64, u64),
    pub r_squared: f64,
    pub points: usize,
}

/// Minimum survivors for a grid point to enter a fit.
pub const MIN_FIT_SURVIVORS: u64 = 30;

/// Fits the log-log slope over grid horizons in `[lo, hi]`, weighting each
/// point by the inverse delta-method variance `(1−p)/(n·p)` of `ln p̂`.
///
/// The standard error accounts for the correlation between horizons of a
/// survival curve (every survivor at `h_j` is also one at `h_i < h_j`).
pub fn fit_exponent(curve: &SurvivalCurve, lo: u64, hi: u64) -> Result<ExponentFit, McError> {
    let n = curve.trials as f64;
    let pts: Vec<(f64, f64, f64)> = curve
        .horizons
        .iter()
        .zip(&curve.survivors)
        .zip(&curve.p_hat)
        .filter(|((&h, &s), _)| h >= lo && h <= hi && s >= MIN_FIT_SURVIVORS)
        .map(|((&h, _), &p)| {
            let var = (1.0 - p).max(0.5 / n) / (n * p);
            ((h as f64).ln(), p.ln(), 1.0 / var)
        })
        .collect();
    if pts.len() < 5 {
        return Err(McError::InsufficientData(format!(
            "{} usable grid points in [{lo}, {hi}], need 5",
            pts.len()
        )));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| p.2 * (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    // The slope is linear in ln p̂ with coefficients c_k. Survivor counts are
    // nested, so Cov(ln p̂_i, ln p̂_j) = v_i for h_i ≤ h_j, v = 1/weight.
    let c: Vec<f64> = pts.iter().map(|p| p.2 * (p.0 - mx) / sxx).collect();
    let mut var = 0.0;
    for i in 0..pts.len() {
        let tail: f64 = c[i + 1..].iter().sum();
        var += c[i] * (c[i] + 2.0 * tail) / pts[i].2;
    }
    Ok(ExponentFit {
        slope,
        intercept,
        stderr: var.max(0.0).sqrt(),
        fit_range: (lo, hi),
        r_squared,
        points: pts.len(),
    })
}

/// A per-trial supply of `ξ_i` values, scaled by a common positive factor
/// (only signs of partial sums matter).
pub trait XiSource: Sync {
    /// Fills `out` with `ξ_1, ..., ξ_n` for trial `trial`; returns whether a
    /// step cap was hit.
    fn fill(&self, trial: u64, n: usize, out: &mut Vec<i128>) -> bool;
}

/// `ξ_i = (1−x)τ_{2i−1} − (1+x)τ_{2i}` from simulated walks, after
/// discarding `burn_in` complete excursions so that every pair starts at a
/// negative-to-positive crossing.
///
/// A half-excursion reaching the step cap is taken to last for the rest of
/// the trial: it contributes its capped length and every later `ξ` is zero.
pub struct WalkXi {
    sampler: IncrementSampler,
    factory: StreamFactory,
    x: Barrier,
    pub burn_in: usize,
    pub step_cap: u64,
}

/// Step cap used by [`WalkXi`] unless overridden.
pub const XI_STEP_CAP: u64 = 1_000_000_000_000;

impl WalkXi {
    pub fn new(dist: &IncrementDistribution, x: Barrier, seed: u64) -> Self {
        Self {
            sampler: IncrementSampler::new(dist),
            factory: StreamFactory::new(seed, Domain::Trials),
            x,
            burn_in: 1,
            step_cap: XI_STEP_CAP,
        }
    }
}

impl WalkXi {
    /// `(τ_{2i−1}, τ_{2i})` for `i = 1..=n`, with the capping rule above
    /// (a capped pair is followed by `(0, 0)` pairs). Returns whether a step
    /// cap was hit.
    pub fn durations(&self, trial: u64, n: usize, out: &mut Vec<(u64, u64)>) -> bool {
        out.clear();
        let mut walker = ExcursionWalker::new(SampledSteps::new(&self.sampler, self.factory.stream(trial)));
        for _ in 0..2 * self.burn_in {
            if walker.next_half(self.step_cap).capped {
                out.resize(n, (0, 0));
                return true;
            }
        }
        while out.len() < n {
            let a = walker.next_half(self.step_cap);
            if a.capped {
                out.push((a.duration, 0));
                out.resize(n, (0, 0));
                return true;
            }
            let b = walker.next_half(self.step_cap);
            out.push((a.duration, b.duration));
            if b.capped {
                out.resize(n, (0, 0));
                return true;
            }
        }
        false
    }
}

impl XiSource for WalkXi {
    fn fill(&self, trial: u64, n: usize, out: &mut Vec<i128>) -> bool {
        let mut pairs = Vec::with_capacity(n);
        let capped = self.durations(trial, n, &mut pairs);
        out.clear();
        out.extend(pairs.iter().map(|&(a, b)| scaled_xi(self.x, a, b)));
        capped
    }
}

/// A constant sequence `ξ_i ≡ value`.
pub struct ConstantXi(pub i128);

impl XiSource for ConstantXi {
    fn fill(&self, _trial: u64, n: usize, out: &mut Vec<i128>) -> bool {
        out.clear();
        out.resize(n, self.0);
        false
    }
}

/// Counts, per grid `n`, of trials with `W_1..W_n ≥ 0` and with `W_n < 0`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct XiTally {
    pub persist: Vec<u64>,
    pub negative: Vec<u64>,
    pub capped: u64,
}

pub fn tally_xi<S: XiSource>(source: &S, n_grid: &[u64], trials: u64, workers: Workers) -> XiTally {
    let n_max = *n_grid.iter().max().expect("non-empty grid") as usize;
    let parts = map_chunks(trials, workers, |range| {
        let mut t = XiTally {
            persist: vec![0; n_grid.len()],
            negative: vec![0; n_grid.len()],
            capped: 0,
        };
        let mut buf = Vec::with_capacity(n_max);
        for i in range {
            if source.fill(i, n_max, &mut buf) {
                t.capped += 1;
            }
            let mut w = 0i128;
            let mut alive = true;
            let mut g = 0usize;
            for (m, xi) in buf.iter().enumerate() {
                w += xi;
                alive &= w >= 0;
                while g < n_grid.len() && n_grid[g] as usize == m + 1 {
                    t.persist[g] += alive as u64;
                    t.negative[g] += (w < 0) as u64;
                    g += 1;
                }
            }
        }
        t
    });
    let mut total = XiTally {
        persist: vec![0; n_grid.len()],
        negative: vec![0; n_grid.len()],
        capped: 0,
    };
    for p in parts {
        for (a, b) in total.persist.iter_mut().zip(p.persist) {
            *a += b;
        }
        for (a, b) in total.negative.iter_mut().zip(p.negative) {
            *a += b;
        }
        total.capped += p.capped;
    }
    total
}

/// Power-skew diagnostic: compares `ln P(W_1..W_n ≥ 0)/ln n` with
/// `P(W_n < 0)`.
///
/// The reported distance is `D_n = |lhs + rhs|`: for a persistently
/// power-skewed sequence `P(all W ≥ 0) ≈ n^{−q}` while `P(W_n < 0) → q`, so
/// the two terms cancel. `printed_d` keeps `|lhs − rhs|` for comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkewDiagnostic {
    pub n_grid: Vec<u64>,
    pub trials: u64,
    pub persist: Vec<u64>,
    pub negative: Vec<u64>,
    /// `None` where undefined (`n = 1` or no persisting trial).
    pub lhs: Vec<Option<f64>>,
    pub rhs: Vec<f64>,
    pub d: Vec<Option<f64>>,
    pub d_err: Vec<Option<f64>>,
    pub printed_d: Vec<Option<f64>>,
    pub degenerate: bool,
    pub capped: u64,
}

pub fn skew_diagnostic_from<S: XiSource>(
    source: &S,
    n_grid: &[u64],
    trials: u64,
    workers: Workers,
) -> Result<SkewDiagnostic, McError> {
    if trials == 0 || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(McError::InsufficientData("need trials and a positive n grid".into()));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let tally = tally_xi(source, &grid, trials, workers);
    let last = *tally.persist.last().unwrap();
    if last > 0 && last < MIN_FIT_SURVIVORS {
        return Err(McError::InsufficientData(format!(
            "{last} persisting trials at n = {}, need {MIN_FIT_SURVIVORS}",
            grid.last().unwrap()
        )));
    }
    let tn = trials as f64;
    let mut out = SkewDiagnostic {
        n_grid: grid.clone(),
        trials,
        persist: tally.persist.clone(),
        negative: tally.negative.clone(),
        lhs: Vec::new(),
        rhs: Vec::new(),
        d: Vec::new(),
        d_err: Vec::new(),
        printed_d: Vec::new(),
        degenerate: false,
        capped: tally.capped,
    };
    for (j, &n) in grid.iter().enumerate() {
        let p = tally.persist[j] as f64 / tn;
        let r = tally.negative[j] as f64 / tn;
        out.rhs.push(r);
        if n < 2 || tally.persist[j] == 0 {
            out.degenerate = true;
            out.lhs.push(None);
            out.d.push(None);
            out.d_err.push(None);
            out.printed_d.push(None);
            continue;
        }
        let ln_n = (n as f64).ln();
        let lhs = p.ln() / ln_n;
        let var_lhs = (1.0 - p) / (tn * p) / (ln_n * ln_n);
        let var_rhs = r * (1.0 - r) / tn;
        out.lhs.push(Some(lhs));
        out.d.push(Some((lhs + r).abs()));
        out.d_err.push(Some((var_lhs + var_rhs).sqrt()));
        out.printed_d.push(Some((lhs - r).abs()));
    }
    Ok(out)
}

/// [`skew_diagnostic_from`] on simulated walk excursions.
pub fn skew_diagnostic(
    dist: &IncrementDistribution,
    x: Barrier,
    n_grid: &[u64],
    opts: &RunOptions,
) -> Result<SkewDiagnostic, McError> {
    skew_diagnostic_from(&WalkXi::new(dist, x, opts.seed), n_grid, opts.trials, opts.workers)
}
