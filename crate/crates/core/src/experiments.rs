//! Canned, seed-pinned validation runs with pass/fail verdicts.
//!
//! Each experiment belongs to one numbered criterion; a criterion passes
//! when all of its experiments pass.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use thiserror::Error;

use crate::barrier::{Barrier, Mode};
use crate::exponent::{estimate_b_q, estimate_b_tail, phi, phi_from_kappa};
use crate::increments::IncrementDistribution;
use crate::montecarlo::{
    fit_exponent, gamma_ratio, half_excursion_survival, skew_diagnostic, survival_a, survival_atilde,
    survival_atilde_on_grid, CapPolicy, RunOptions, SurvivalCurve,
};
use crate::oracle::{exact_atilde, DpOptions};
use crate::parallel::Workers;
use crate::report;
use crate::stable::{ks_distance, levy_cdf, negativity_probability, sample_n, StableParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("unknown experiment {0:?}; known: {known}", known = EXPERIMENTS.iter().map(|e| e.id).collect::<Vec<_>>().join(", "))]
    UnknownExperiment(String),
}

#[derive(Clone, Copy, Debug)]
pub struct Experiment {
    pub id: &'static str,
    pub criterion: u8,
    pub summary: &'static str,
}

pub const EXPERIMENTS: &[Experiment] = &[
    Experiment { id: "closed-form-identity", criterion: 1, summary: "arccos and arctan forms of phi agree on a 100x100 grid" },
    Experiment { id: "stable-sampler", criterion: 2, summary: "negativity probabilities and Levy CDF of the stable sampler" },
    Experiment { id: "oracle-agreement", criterion: 3, summary: "exact DP against Monte Carlo for the simple walk" },
    Experiment { id: "srw-atilde-slope-x0", criterion: 4, summary: "sign-sum survival slope, simple walk, x = 0" },
    Experiment { id: "srw-atilde-slope-x1-4", criterion: 4, summary: "sign-sum survival slope, simple walk, x = 1/4" },
    Experiment { id: "srw-atilde-slope-x1-2", criterion: 4, summary: "sign-sum survival slope, simple walk, x = 1/2" },
    Experiment { id: "srw-a-slope-x0", criterion: 5, summary: "excursion survival slope and Gamma-ratio shape, x = 0" },
    Experiment { id: "srw-a-slope-x1-2", criterion: 5, summary: "excursion survival slope and Gamma-ratio shape, x = 1/2" },
    Experiment { id: "asymmetric-walk", criterion: 6, summary: "b estimators and slope for {+1: 2/3, -2: 1/3}" },
    Experiment { id: "half-excursion-tail", criterion: 7, summary: "first half-excursion survival slope, simple walk" },
    Experiment { id: "skew-diagnostic", criterion: 8, summary: "power-skew distance for the simple walk" },
    Experiment { id: "determinism", criterion: 9, summary: "bit-identical CSV bodies for 1, 4 and 16 workers" },
];

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: &'static str,
    pub criterion: u8,
    pub passed: bool,
    pub details: Vec<String>,
    /// Every curve produced, by name.
    pub curves: Vec<(String, SurvivalCurve)>,
}

impl Outcome {
    fn new(e: &Experiment) -> Self {
        Self { id: e.id, criterion: e.criterion, passed: true, details: Vec::new(), curves: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: String) {
        self.passed &= ok;
        self.details.push(format!("[{}] {detail}", if ok { "ok" } else { "FAIL" }));
    }
}

pub fn find(id: &str) -> Result<&'static Experiment, ExperimentError> {
    EXPERIMENTS
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| ExperimentError::UnknownExperiment(id.to_string()))
}

pub fn criterion_experiments(criterion: u8) -> impl Iterator<Item = &'static Experiment> {
    EXPERIMENTS.iter().filter(move |e| e.criterion == criterion)
}

pub fn run(id: &str, workers: Workers) -> Result<Outcome, ExperimentError> {
    let e = find(id)?;
    let mut out = Outcome::new(e);
    match e.id {
        "closed-form-identity" => closed_form(&mut out),
        "stable-sampler" => stable_sampler(&mut out, workers),
        "oracle-agreement" => oracle_agreement(&mut out, workers),
        "srw-atilde-slope-x0" => atilde_slope(&mut out, Barrier::new(0, 1).unwrap(), workers),
        "srw-atilde-slope-x1-4" => atilde_slope(&mut out, Barrier::new(1, 4).unwrap(), workers),
        "srw-atilde-slope-x1-2" => atilde_slope(&mut out, Barrier::new(1, 2).unwrap(), workers),
        "srw-a-slope-x0" => a_slope(&mut out, Barrier::new(0, 1).unwrap(), workers),
        "srw-a-slope-x1-2" => a_slope(&mut out, Barrier::new(1, 2).unwrap(), workers),
        "asymmetric-walk" => asymmetric(&mut out, workers),
        "half-excursion-tail" => half_tail(&mut out, workers),
        "skew-diagnostic" => skew(&mut out, workers),
        "determinism" => determinism(&mut out),
        _ => unreachable!("listed experiment without a runner"),
    }
    Ok(out)
}

fn closed_form(out: &mut Outcome) {
    let mut worst = 0.0f64;
    for i in 0..100 {
        for j in 0..100 {
            let (x, b) = (0.99 * i as f64 / 99.0, 0.1 + 9.9 * j as f64 / 99.0);
            worst = worst.max((phi(x, b).unwrap() - phi_from_kappa(x, b).unwrap()).abs());
        }
    }
    out.check(worst < 1e-12, format!("max |arccos form - arctan form| = {worst:.3e} (< 1e-12)"));
    let a = phi(0.0, 1.0).unwrap();
    out.check(a == 0.5, format!("phi(0, 1) = {a}"));
    let b = phi(0.5, 1.0).unwrap();
    out.check((b - 2.0 / 3.0).abs() <= f64::EPSILON, format!("phi(1/2, 1) = {b} (2/3 = {})", 2.0 / 3.0));
}

const STABLE_DRAWS: u64 = 1_000_000;

fn stable_sampler(out: &mut Outcome, workers: Workers) {
    for (i, kappa) in [-1.0, -1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0].into_iter().enumerate() {
        let p = StableParams::standard(kappa).unwrap();
        let draws = sample_n(&p, STABLE_DRAWS, 0x5ab1e + i as u64, workers);
        let neg = draws.iter().filter(|&&z| z < 0.0).count() as f64 / STABLE_DRAWS as f64;
        let exact = negativity_probability(kappa).unwrap();
        let sigma = (exact * (1.0 - exact) / STABLE_DRAWS as f64).sqrt();
        out.check(
            (neg - exact).abs() <= 3.0 * sigma,
            format!("kappa={kappa:+.4}: P(Z<0) = {neg:.5}, exact {exact:.5}, 3 sigma = {:.5}", 3.0 * sigma),
        );
        if kappa == 1.0 {
            let mut sorted = draws;
            sorted.sort_unstable_by(f64::total_cmp);
            let ks = ks_distance(&sorted, |t| levy_cdf(t).unwrap_or(0.0));
            out.check(ks < 0.005, format!("kappa=1: KS distance to Levy CDF = {ks:.5} (< 0.005)"));
        }
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn oracle_agreement(out: &mut Outcome, workers: Workers) {
    let srw = IncrementDistribution::simple();
    let x0 = Barrier::new(0, 1).unwrap();
    let want = [(1, 2), (1, 2), (1, 2), (3, 8)];
    for (t, (n, d)) in (1..=4).zip(want) {
        let p = exact_atilde(&srw, x0, t, Mode::Strict, DpOptions::default()).unwrap().probability;
        let w = BigRational::new(BigInt::from(n), BigInt::from(d));
        out.check(p == w, format!("exact P(t={t}, x=0) = {p}"));
    }
    let grid = [4u64, 16, 64, 256];
    let trials = 1_000_000;
    let mut hits = 0;
    for (p, q) in [(0, 1), (1, 2)] {
        let x = Barrier::new(p, q).unwrap();
        let opts = RunOptions::new(trials, 0x0dac1e + p as u64).workers(workers.get());
        let curve = survival_atilde_on_grid(&srw, x, Mode::Strict, &grid, &opts);
        out.curves.push((format!("oracle-mc-x{p}-{q}"), curve.clone()));
        for (i, &t) in grid.iter().enumerate() {
            let exact = to_f64(&exact_atilde(&srw, x, t, Mode::Strict, DpOptions::default()).unwrap().probability);
            let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
            let z = (curve.p_hat[i] - exact) / sigma;
            hits += (z.abs() <= 3.0) as u32;
            out.details.push(format!(
                "x={x} t={t}: MC {:.5} exact {exact:.5} z = {z:+.2}",
                curve.p_hat[i]
            ));
        }
    }
    out.check(hits >= 7, format!("{hits}/8 cells within 3 sigma (need 7)"));
}

fn atilde_slope(out: &mut Outcome, x: Barrier, workers: Workers) {
    let srw = IncrementDistribution::simple();
    let opts = RunOptions::new(1_000_000, 0xa711de + x.num() as u64 * 7 + x.den() as u64).workers(workers.get());
    let curve = survival_atilde(&srw, x, Mode::Strict, 100_000, &opts);
    out.curves.push((format!("atilde-x{}-{}", x.num(), x.den()), curve.clone()));
    let target = -phi(x.to_f64(), 1.0).unwrap() / 2.0;
    match fit_exponent(&curve, 1000, 100_000) {
        Ok(f) => out.check(
            (f.slope - target).abs() <= 0.05,
            format!(
                "x={x}: slope {:.4} +- {:.4} over [1e3, 1e5], target {target:.4}, |diff| {:.4} (<= 0.05)",
                f.slope,
                f.stderr,
                (f.slope - target).abs()
            ),
        ),
        Err(e) => out.check(false, format!("x={x}: {e}")),
    }
}

/// Step cap large enough that no trial is capped at this scale.
const A_STEP_CAP: u64 = 1_000_000_000_000_000;

fn a_slope(out: &mut Outcome, x: Barrier, workers: Workers) {
    let srw = IncrementDistribution::simple();
    let opts = RunOptions::new(100_000, 0xa5 + x.num() as u64).workers(workers.get());
    let cap = CapPolicy { step_cap: A_STEP_CAP, fail_on_cap: false };
    let curve = match survival_a(&srw, x, Mode::Weak, 1000, cap, &opts) {
        Ok(c) => c,
        Err(e) => return out.check(false, format!("x={x}: {e}")),
    };
    out.curves.push((format!("a-x{}-{}", x.num(), x.den()), curve.clone()));
    out.details.push(format!("capped trials: {}", curve.capped));
    let ph = phi(x.to_f64(), 1.0).unwrap();
    match fit_exponent(&curve, 100, 1000) {
        Ok(f) => out.check(
            (f.slope + ph).abs() <= 0.07,
            format!(
                "x={x}: slope {:.4} +- {:.4} over [1e2, 1e3], target {:.4}, |diff| {:.4} (<= 0.07)",
                f.slope,
                f.stderr,
                -ph,
                (f.slope + ph).abs()
            ),
        ),
        Err(e) => out.check(false, format!("x={x}: {e}")),
    }
    let ratios: Vec<f64> = curve
        .horizons
        .iter()
        .zip(&curve.p_hat)
        .filter(|(&k, &p)| (100..=1000).contains(&k) && p > 0.0)
        .map(|(&k, &p)| p.ln() - gamma_ratio(k, ph).ln())
        .collect();
    let spread = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    out.check(
        !ratios.is_empty() && spread < 0.3,
        format!("x={x}: log p_hat - log Gamma-ratio spread {spread:.4} over {} points (< 0.3)", ratios.len()),
    );
}

fn asymmetric(out: &mut Outcome, workers: Workers) {
    let dist = IncrementDistribution::from_arg("unit-up:-2").unwrap();
    let x0 = Barrier::new(0, 1).unwrap();
    let tail = estimate_b_tail(&dist, 100_000, 0xb7a11, workers);
    let q = estimate_b_q(&dist, x0, 200, &RunOptions::new(20_000, 0xb0).workers(workers.get()));
    let (tail, q) = match (tail, q) {
        (Ok(t), Ok(q)) => (t, q),
        (t, q) => return out.check(false, format!("estimator failed: tail {:?}, q {:?}", t.err(), q.err())),
    };
    let mutual = (tail.stderr.powi(2) + q.stderr.powi(2)).sqrt();
    out.check(
        (tail.b_hat - q.b_hat).abs() <= 3.0 * mutual,
        format!(
            "b tail {:.4} +- {:.4}, b q {:.4} +- {:.4}, |diff| {:.4} (<= {:.4})",
            tail.b_hat,
            tail.stderr,
            q.b_hat,
            q.stderr,
            (tail.b_hat - q.b_hat).abs(),
            3.0 * mutual
        ),
    );
    let (wt, wq) = (tail.stderr.powi(-2), q.stderr.powi(-2));
    let b = (wt * tail.b_hat + wq * q.b_hat) / (wt + wq);
    let target = -phi(0.0, b).unwrap() / 2.0;
    let opts = RunOptions::new(1_000_000, 0xa5a5).workers(workers.get());
    let curve = survival_atilde(&dist, x0, Mode::Strict, 100_000, &opts);
    out.curves.push(("asymmetric-atilde-x0".into(), curve.clone()));
    match fit_exponent(&curve, 1000, 100_000) {
        Ok(f) => out.check(
            (f.slope - target).abs() <= 0.07,
            format!(
                "slope {:.4} +- {:.4}, -phi(0, b)/2 = {target:.4} at pooled b = {b:.4}, |diff| {:.4} (<= 0.07)",
                f.slope,
                f.stderr,
                (f.slope - target).abs()
            ),
        ),
        Err(e) => out.check(false, e.to_string()),
    }
}

fn half_tail(out: &mut Outcome, workers: Workers) {
    let srw = IncrementDistribution::simple();
    let curve = half_excursion_survival(&srw, 10_000, &RunOptions::new(1_000_000, 0x7a11).workers(workers.get()));
    out.curves.push(("half-excursion".into(), curve.clone()));
    match fit_exponent(&curve, 100, 10_000) {
        Ok(f) => out.check(
            (f.slope + 0.5).abs() <= 0.03,
            format!("slope {:.4} +- {:.4} over [1e2, 1e4], |slope + 1/2| {:.4} (<= 0.03)", f.slope, f.stderr, (f.slope + 0.5).abs()),
        ),
        Err(e) => out.check(false, e.to_string()),
    }
}

fn skew(out: &mut Outcome, workers: Workers) {
    let srw = IncrementDistribution::simple();
    let opts = RunOptions::new(20_000, 0x5ce7).workers(workers.get());
    let d = match skew_diagnostic(&srw, Barrier::new(0, 1).unwrap(), &[10, 100, 1000], &opts) {
        Ok(d) => d,
        Err(e) => return out.check(false, e.to_string()),
    };
    for i in 0..d.n_grid.len() {
        out.details.push(format!(
            "n={}: lhs {:.4} rhs {:.4} D {:.4} +- {:.4} (as printed {:.4})",
            d.n_grid[i],
            d.lhs[i].unwrap_or(f64::NAN),
            d.rhs[i],
            d.d[i].unwrap_or(f64::NAN),
            d.d_err[i].unwrap_or(f64::NAN),
            d.printed_d[i].unwrap_or(f64::NAN)
        ));
    }
    let ds: Vec<f64> = d.d.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    out.check(ds.windows(2).all(|w| w[1] < w[0]), format!("D_n decreasing: {ds:.4?}"));
    out.check(ds[2] < 0.1, format!("D_1000 = {:.4} (< 0.1)", ds[2]));
}

fn determinism(out: &mut Outcome) {
    let srw = IncrementDistribution::simple();
    let x0 = Barrier::new(0, 1).unwrap();
    let mut runs: Vec<(usize, SurvivalCurve, SurvivalCurve)> = Vec::new();
    for w in [1usize, 4, 16] {
        let opts = RunOptions::new(1_000_000, 0xa711de + 1).workers(w);
        let atilde = survival_atilde(&srw, x0, Mode::Strict, 100_000, &opts);
        let opts = RunOptions::new(20_000, 0xa5).workers(w);
        let cap = CapPolicy { step_cap: A_STEP_CAP, fail_on_cap: false };
        let a = survival_a(&srw, x0, Mode::Weak, 1000, cap, &opts).expect("uncapped");
        runs.push((w, atilde, a));
    }
    let (base_atilde, base_a) = (report::body(&runs[0].1), report::body(&runs[0].2));
    for (w, atilde, a) in &runs[1..] {
        out.check(report::body(atilde) == base_atilde, format!("sign-sum curve CSV: workers {w} vs 1 identical"));
        out.check(report::body(a) == base_a, format!("excursion curve CSV: workers {w} vs 1 identical"));
    }
    let (_, atilde, a) = runs.swap_remove(0);
    out.curves.push(("determinism-atilde".into(), atilde));
    out.curves.push(("determinism-a".into(), a));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id() {
        assert!(matches!(run("bogus", Workers::new(1)), Err(ExperimentError::UnknownExperiment(_))));
    }

    #[test]
    fn every_criterion_has_experiments() {
        for c in 1..=9 {
            assert!(criterion_experiments(c).count() > 0, "criterion {c}");
        }
    }

    #[test]
    fn closed_form_passes() {
        let o = run("closed-form-identity", Workers::new(1)).unwrap();
        assert!(o.passed, "{:?}", o.details);
    }
}
