//! The persistence exponent `φ(x, b)`, its ingredients and inverse, and two
//! empirical estimators of a walk's relative asymmetry `b`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand_distr::{Binomial, Distribution};
use serde::Serialize;
use thiserror::Error;

use crate::barrier::Barrier;
use crate::increments::{IncrementDistribution, IncrementSampler};
use crate::montecarlo::{tally_xi, RunOptions, WalkXi, XI_STEP_CAP};
use crate::parallel::{map_chunks, map_trials, Workers};
use crate::rng::{Domain, StreamFactory};
use crate::walk::{scaled_xi, ExcursionWalker, SampledSteps};

#[derive(Debug, Error, PartialEq)]
pub enum ExponentError {
    #[error("argument out of domain: {0}")]
    OutOfDomain(String),
    #[error("exponent {phi} is not attainable at x = {x}")]
    Unattainable { phi: f64, x: f64 },
    #[error("insufficient tail: {0}")]
    InsufficientTail(String),
}

fn check(x: f64, b: f64) -> Result<(), ExponentError> {
    if !(0.0..1.0).contains(&x) {
        return Err(ExponentError::OutOfDomain(format!("x = {x} not in [0, 1)")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(ExponentError::OutOfDomain(format!("b = {b} must be positive")));
    }
    Ok(())
}

pub fn kappa_of(x: f64, b: f64) -> Result<f64, ExponentError> {
    check(x, b)?;
    let (l, r) = ((1.0 - x).sqrt() * b, (1.0 + x).sqrt());
    Ok((l - r) / (l + r))
}

/// `ψ̄ = (b² − 1)/(b² + 1)`.
pub fn psi_bar(b: f64) -> Result<f64, ExponentError> {
    check(0.0, b)?;
    let b2 = b * b;
    Ok((b2 - 1.0) / (b2 + 1.0))
}

/// `φ(x, b) = arccos((ψ̄ − x)/(1 − ψ̄x))/π`.
pub fn phi(x: f64, b: f64) -> Result<f64, ExponentError> {
    check(x, b)?;
    let b2 = b * b;
    // Cleared of the ψ̄ denominators to avoid cancellation near b = 1.
    let arg = ((b2 - 1.0) - x * (b2 + 1.0)) / ((b2 + 1.0) - x * (b2 - 1.0));
    Ok(arg.clamp(-1.0, 1.0).acos() / PI)
}

/// `φ = 1/2 − 2·arctan(κ)/π`, the same exponent through `κ(x, b)`.
pub fn phi_from_kappa(x: f64, b: f64) -> Result<f64, ExponentError> {
    Ok(0.5 - 2.0 * kappa_of(x, b)?.atan() / PI)
}

/// The `b` with `φ(x, b) = phi_target`.
pub fn invert_phi(phi_target: f64, x: f64) -> Result<f64, ExponentError> {
    if !(phi_target > 0.0 && phi_target < 1.0) {
        return Err(ExponentError::OutOfDomain(format!("phi = {phi_target} not in (0, 1)")));
    }
    check(x, 1.0)?;
    let w = (PI * phi_target).cos();
    let psi = (w + x) / (1.0 + w * x);
    if psi.is_nan() || psi.abs() >= 1.0 {
        return Err(ExponentError::Unattainable { phi: phi_target, x });
    }
    let b = ((1.0 + psi) / (1.0 - psi)).sqrt();
    if !(b > 0.0 && b.is_finite()) {
        return Err(ExponentError::Unattainable { phi: phi_target, x });
    }
    Ok(b)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AsymmetryModel {
    pub x: f64,
    pub b: f64,
    pub kappa: f64,
    pub psi_bar: f64,
    pub phi: f64,
}

impl AsymmetryModel {
    pub fn new(x: f64, b: f64) -> Result<Self, ExponentError> {
        Ok(Self {
            x,
            b,
            kappa: kappa_of(x, b)?,
            psi_bar: psi_bar(b)?,
            phi: phi(x, b)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TailRatio,
    QInversion,
}

/// Tail constant of one entry type.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryTail {
    pub entry: i64,
    /// Share `γ` of half-excursions of this sign with this entry position.
    pub gamma: f64,
    /// `C` in `P(τ > n | entry) ≈ C·n^{−1/2}`, averaged over the window.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailDiagnostics {
    pub positive: usize,
    pub negative: usize,
    pub window: (f64, f64),
    pub grid: Vec<f64>,
    /// `√n·P̂(τ⁺ > n)` and `√n·P̂(τ⁻ > n)` on the grid.
    pub c_plus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub entries_plus: Vec<EntryTail>,
    pub entries_minus: Vec<EntryTail>,
    /// `Σγ_i C_i⁺ / Σγ_i C_i⁻` (the pooled ratio).
    pub ratio_gamma_c: f64,
    /// `Σ√(γ_i C_i⁺) / Σ√(γ_i C_i⁻)`.
    pub ratio_sqrt_gamma_c: f64,
    pub capped: u64,
    pub bootstrap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QDiagnostics {
    pub x: f64,
    pub n: u64,
    pub trials: u64,
    pub q_hat: f64,
    pub q_stderr: f64,
    /// `q̂` at `n/4` from the same trials.
    pub q_quarter: f64,
    /// `q̂(n) − q̂(n/4)`.
    pub drift: f64,
    pub capped: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Diagnostics {
    Tail(TailDiagnostics),
    Q(QDiagnostics),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AsymmetryEstimate {
    pub b_hat: f64,
    pub method: Method,
    pub stderr: f64,
    pub diagnostics: Diagnostics,
}

/// Complete excursions simulated per random stream by [`estimate_b_tail`].
pub const EXCURSIONS_PER_STREAM: u64 = 64;
/// Window grid points for the tail ratio.
pub const TAIL_GRID: usize = 12;
/// Bootstrap replicates for the tail-ratio standard error.
pub const BOOTSTRAP: usize = 200;
/// Minimum half-excursions of each sign above the window start.
pub const MIN_TAIL: usize = 100;

struct Half {
    positive: bool,
    entry: i64,
    duration: u64,
}

/// Ratio `b̂ = C⁺/C⁻` of the `n^{−1/2}` tail constants of positive and
/// negative half-excursion durations.
///
/// Each stream discards one complete excursion and then records up to
/// [`EXCURSIONS_PER_STREAM`] more. `log b̂` is the mean of
/// `log(P̂(τ⁺ > n)/P̂(τ⁻ > n))` over [`TAIL_GRID`] log-spaced `n` between the
/// 90th and 99.9th percentiles of the pooled durations; the standard error
/// comes from a multinomial bootstrap of the binned counts.
pub fn estimate_b_tail(
    dist: &IncrementDistribution,
    n_excursions: u64,
    seed: u64,
    workers: Workers,
) -> Result<AsymmetryEstimate, ExponentError> {
    let sampler = IncrementSampler::new(dist);
    let factory = StreamFactory::new(seed, Domain::Trials);
    let streams = n_excursions.div_ceil(EXCURSIONS_PER_STREAM);
    let runs = map_trials(streams, workers, |i| {
        let want = EXCURSIONS_PER_STREAM.min(n_excursions - i * EXCURSIONS_PER_STREAM);
        let mut walker = ExcursionWalker::new(SampledSteps::new(&sampler, factory.stream(i)));
        let mut out = Vec::with_capacity(2 * want as usize);
        for _ in 0..2 {
            if walker.next_half(XI_STEP_CAP).capped {
                return (out, true);
            }
        }
        for _ in 0..2 * want {
            let h = walker.next_half(XI_STEP_CAP);
            out.push(Half { positive: h.positive, entry: h.entry, duration: h.duration });
            if h.capped {
                return (out, true);
            }
        }
        (out, false)
    });
    let capped = runs.iter().filter(|r| r.1).count() as u64;
    let halves: Vec<Half> = runs.into_iter().flat_map(|r| r.0).collect();
    tail_ratio(&halves, capped, seed)
}

fn survival_counts(sorted: &[u64], grid: &[f64]) -> Vec<usize> {
    grid.iter()
        .map(|&n| sorted.len() - sorted.partition_point(|&d| (d as f64) <= n))
        .collect()
}

fn entry_tails(halves: &[Half], positive: bool, grid: &[f64]) -> Vec<EntryTail> {
    let mut by_entry: BTreeMap<i64, Vec<u64>> = BTreeMap::new();
    for h in halves.iter().filter(|h| h.positive == positive) {
        by_entry.entry(h.entry).or_default().push(h.duration);
    }
    let total: usize = by_entry.values().map(Vec::len).sum();
    by_entry
        .into_iter()
        .map(|(entry, mut d)| {
            d.sort_unstable();
            let counts = survival_counts(&d, grid);
            let constant = grid
                .iter()
                .zip(&counts)
                .map(|(n, &c)| n.sqrt() * c as f64 / d.len() as f64)
                .sum::<f64>()
                / grid.len() as f64;
            EntryTail { entry, gamma: d.len() as f64 / total as f64, constant }
        })
        .collect()
}

fn tail_ratio(halves: &[Half], capped: u64, seed: u64) -> Result<AsymmetryEstimate, ExponentError> {
    let mut plus: Vec<u64> = halves.iter().filter(|h| h.positive).map(|h| h.duration).collect();
    let mut minus: Vec<u64> = halves.iter().filter(|h| !h.positive).map(|h| h.duration).collect();
    if plus.is_empty() || minus.is_empty() {
        return Err(ExponentError::InsufficientTail("no half-excursions".into()));
    }
    plus.sort_unstable();
    minus.sort_unstable();
    let mut pooled: Vec<u64> = plus.iter().chain(&minus).copied().collect();
    pooled.sort_unstable();
    let pct = |q: f64| pooled[((q * pooled.len() as f64) as usize).min(pooled.len() - 1)] as f64;
    let (lo, hi) = (pct(0.90).max(1.0), pct(0.999).max(1.0));
    let above = |v: &[u64]| v.len() - v.partition_point(|&d| (d as f64) <= lo);
    let (ap, am) = (above(&plus), above(&minus));
    if ap < MIN_TAIL || am < MIN_TAIL || hi <= lo {
        return Err(ExponentError::InsufficientTail(format!(
            "{ap} positive and {am} negative durations above {lo}, need {MIN_TAIL} each"
        )));
    }
    let step = (hi / lo).ln() / (TAIL_GRID - 1) as f64;
    let grid: Vec<f64> = (0..TAIL_GRID).map(|j| lo * (step * j as f64).exp()).collect();
    let sp = survival_counts(&plus, &grid);
    let sm = survival_counts(&minus, &grid);
    let (np, nm) = (plus.len() as f64, minus.len() as f64);

    let log_ratio = |sp: &[usize], sm: &[usize]| -> Option<f64> {
        let mut acc = 0.0;
        let mut used = 0;
        for (&a, &b) in sp.iter().zip(sm) {
            if a > 0 && b > 0 {
                acc += (a as f64 / np).ln() - (b as f64 / nm).ln();
                used += 1;
            }
        }
        (used >= 8).then(|| acc / used as f64)
    };
    let b_hat = log_ratio(&sp, &sm)
        .ok_or_else(|| ExponentError::InsufficientTail("fewer than 8 populated grid points".into()))?
        .exp();

    // Bin counts: bins[0] at or below grid[0], bins[j] in (grid[j−1], grid[j]],
    // bins[G] above the last point.
    let bins = |s: &[usize], n: usize| -> Vec<u64> {
        let mut out = Vec::with_capacity(s.len() + 1);
        out.push((n - s[0]) as u64);
        for w in s.windows(2) {
            out.push((w[0] - w[1]) as u64);
        }
        out.push(*s.last().unwrap() as u64);
        out
    };
    let (bp, bm) = (bins(&sp, plus.len()), bins(&sm, minus.len()));
    let boot = StreamFactory::new(seed, Domain::Bootstrap);
    let resample = |counts: &[u64], total: u64, rng: &mut crate::rng::RandomStream| -> Vec<usize> {
        let mut left = total;
        let mut mass = 1.0;
        let mut draws = Vec::with_capacity(counts.len());
        for &c in counts {
            let p = if mass > 0.0 { (c as f64 / total as f64 / mass).min(1.0) } else { 0.0 };
            let k = if left == 0 || p <= 0.0 {
                0
            } else {
                Binomial::new(left, p).expect("valid binomial").sample(rng)
            };
            draws.push(k);
            left -= k;
            mass -= c as f64 / total as f64;
        }
        // survival counts above each grid point
        let mut s = vec![0usize; counts.len() - 1];
        let mut acc = 0u64;
        for j in (0..s.len()).rev() {
            acc += draws[j + 1];
            s[j] = acc as usize;
        }
        s
    };
    let reps: Vec<f64> = (0..BOOTSTRAP as u64)
        .filter_map(|r| {
            let mut rng = boot.stream(r);
            let sp = resample(&bp, plus.len() as u64, &mut rng);
            let sm = resample(&bm, minus.len() as u64, &mut rng);
            log_ratio(&sp, &sm).map(f64::exp)
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / reps.len() as f64;
    let stderr = (reps.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.len() as f64 - 1.0)).sqrt();

    let c_plus: Vec<f64> = grid.iter().zip(&sp).map(|(n, &c)| n.sqrt() * c as f64 / np).collect();
    let c_minus: Vec<f64> = grid.iter().zip(&sm).map(|(n, &c)| n.sqrt() * c as f64 / nm).collect();
    let entries_plus = entry_tails(halves, true, &grid);
    let entries_minus = entry_tails(halves, false, &grid);
    let agg = |e: &[EntryTail], f: fn(&EntryTail) -> f64| e.iter().map(f).sum::<f64>();
    let ratio_gamma_c = agg(&entries_plus, |e| e.gamma * e.constant) / agg(&entries_minus, |e| e.gamma * e.constant);
    let ratio_sqrt_gamma_c =
        agg(&entries_plus, |e| (e.gamma * e.constant).sqrt()) / agg(&entries_minus, |e| (e.gamma * e.constant).sqrt());

    Ok(AsymmetryEstimate {
        b_hat,
        method: Method::TailRatio,
        stderr,
        diagnostics: Diagnostics::Tail(TailDiagnostics {
            positive: plus.len(),
            negative: minus.len(),
            window: (lo, hi),
            grid,
            c_plus,
            c_minus,
            entries_plus,
            entries_minus,
            ratio_gamma_c,
            ratio_sqrt_gamma_c,
            capped,
            bootstrap: reps.len(),
        }),
    })
}

/// `P̂(W_n < 0)` from stationary excursion sequences.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QEstimate {
    pub n: u64,
    pub trials: u64,
    pub negative: u64,
    pub q_hat: f64,
    pub stderr: f64,
    pub capped: u64,
}

/// Fraction of trials with `W_n = Σ_{i≤n} ξ_i < 0`, each trial simulating
/// `n` complete excursions after one discarded excursion.
pub fn estimate_q(dist: &IncrementDistribution, x: Barrier, n: u64, opts: &RunOptions) -> QEstimate {
    let t = tally_xi(&WalkXi::new(dist, x, opts.seed), &[n], opts.trials, opts.workers);
    q_estimate(n, opts.trials, t.negative[0], t.capped)
}

/// [`estimate_q`] for several barriers from one set of simulated
/// excursions (durations do not depend on `x`).
pub fn estimate_q_many(
    dist: &IncrementDistribution,
    xs: &[Barrier],
    n: u64,
    opts: &RunOptions,
) -> Vec<QEstimate> {
    let source = WalkXi::new(dist, Barrier::new(0, 1).expect("zero barrier"), opts.seed);
    let parts = map_chunks(opts.trials, opts.workers, |range| {
        let mut negative = vec![0u64; xs.len()];
        let mut capped = 0u64;
        let mut pairs = Vec::with_capacity(n as usize);
        for i in range {
            capped += source.durations(i, n as usize, &mut pairs) as u64;
            for (x, neg) in xs.iter().zip(negative.iter_mut()) {
                let w: i128 = pairs.iter().map(|&(a, b)| scaled_xi(*x, a, b)).sum();
                *neg += (w < 0) as u64;
            }
        }
        (negative, capped)
    });
    let mut negative = vec![0u64; xs.len()];
    let mut capped = 0;
    for (neg, c) in parts {
        for (a, b) in negative.iter_mut().zip(neg) {
            *a += b;
        }
        capped += c;
    }
    negative.into_iter().map(|neg| q_estimate(n, opts.trials, neg, capped)).collect()
}

fn q_estimate(n: u64, trials: u64, negative: u64, capped: u64) -> QEstimate {
    let q = negative as f64 / trials as f64;
    QEstimate {
        n,
        trials,
        negative,
        q_hat: q,
        stderr: (q * (1.0 - q) / trials as f64).sqrt(),
        capped,
    }
}

/// `b̂ = invert_phi(q̂(n), x)`, with a delta-method standard error and the
/// drift `q̂(n) − q̂(n/4)` from the same trials.
pub fn estimate_b_q(
    dist: &IncrementDistribution,
    x: Barrier,
    n: u64,
    opts: &RunOptions,
) -> Result<AsymmetryEstimate, ExponentError> {
    let quarter = (n / 4).max(1);
    let grid = if quarter < n { vec![quarter, n] } else { vec![n] };
    let t = tally_xi(&WalkXi::new(dist, x, opts.seed), &grid, opts.trials, opts.workers);
    let full = q_estimate(n, opts.trials, *t.negative.last().unwrap(), t.capped);
    let q_quarter = t.negative[0] as f64 / opts.trials as f64;
    let xf = x.to_f64();
    let b_hat = invert_phi(full.q_hat, xf)?;
    let h = (0.25 * full.stderr).max(1e-6);
    let slope = match (invert_phi(full.q_hat + h, xf), invert_phi(full.q_hat - h, xf)) {
        (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
        _ => f64::INFINITY,
    };
    Ok(AsymmetryEstimate {
        b_hat,
        method: Method::QInversion,
        stderr: slope.abs() * full.stderr,
        diagnostics: Diagnostics::Q(QDiagnostics {
            x: xf,
            n,
            trials: opts.trials,
            q_hat: full.q_hat,
            q_stderr: full.stderr,
            q_quarter,
            drift: full.q_hat - q_quarter,
            capped: full.capped,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa_of(0.0, 1.0).unwrap(), 0.0);
        assert!((kappa_of(0.6, 1.0).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert!((kappa_of(0.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi(0.0, 1.0).unwrap(), 0.5);
        assert!((phi(0.5, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((phi(0.0, 2.0).unwrap() - 0.295_167_235_300_866_6).abs() < 1e-12);
        assert!((phi(0.6, 1.0).unwrap() - 0.704_832_764_699_133_4).abs() < 1e-12);
        assert!((phi(0.25, 1.0).unwrap() / 2.0 - 0.2902).abs() < 5e-5);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(phi(1.0, 1.0), Err(ExponentError::OutOfDomain(_))));
        assert!(matches!(phi(-0.1, 1.0), Err(ExponentError::OutOfDomain(_))));
        assert!(matches!(kappa_of(0.0, 0.0), Err(ExponentError::OutOfDomain(_))));
        assert!(matches!(invert_phi(1.0, 0.0), Err(ExponentError::OutOfDomain(_))));
        assert!(matches!(invert_phi(1e-300, 0.0), Err(ExponentError::Unattainable { .. })));
    }

    #[test]
    fn inversion_examples() {
        assert!((invert_phi(0.5, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((invert_phi(2.0 / 3.0, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    fn grid() -> impl Iterator<Item = (f64, f64)> {
        (0..100).flat_map(|i| {
            (0..100).map(move |j| (0.99 * i as f64 / 99.0, 0.1 + 9.9 * j as f64 / 99.0))
        })
    }

    #[test]
    fn dual_formula_identity() {
        for (x, b) in grid() {
            let a = phi(x, b).unwrap();
            let c = phi_from_kappa(x, b).unwrap();
            assert!((a - c).abs() < 1e-12, "x={x} b={b}: {a} vs {c}");
            assert!(a > 0.0 && a <= 1.0);
            let m = AsymmetryModel::new(x, b).unwrap();
            assert!(m.psi_bar.abs() < 1.0 && m.kappa.abs() < 1.0);
        }
    }

    #[test]
    fn matches_stable_negativity() {
        for (x, b) in grid().step_by(37) {
            let p = crate::stable::negativity_probability(kappa_of(x, b).unwrap()).unwrap();
            assert!((phi(x, b).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_on_grid() {
        let xs: Vec<f64> = (0..100).map(|i| 0.99 * i as f64 / 99.0).collect();
        let bs: Vec<f64> = (0..100).map(|j| 0.1 + 9.9 * j as f64 / 99.0).collect();
        for &b in &bs {
            for w in xs.windows(2) {
                assert!(phi(w[1], b).unwrap() > phi(w[0], b).unwrap());
            }
        }
        for &x in &xs {
            for w in bs.windows(2) {
                assert!(phi(x, w[1]).unwrap() < phi(x, w[0]).unwrap());
            }
        }
    }

    #[test]
    fn boundary_behaviour() {
        assert!(phi(1.0 - 1e-12, 1.0).unwrap() > 0.999);
        assert!(phi(1.0 - 1e-12, 5.0).unwrap() > 0.99);
        assert!(phi(0.0, 1e6).unwrap() < 1e-5);
    }

    proptest! {
        #[test]
        fn inversion_round_trip(x in 0.0f64..0.99, b in 0.1f64..10.0) {
            let p = phi(x, b).unwrap();
            let back = invert_phi(p, x).unwrap();
            prop_assert!((back - b).abs() < 1e-9 * b.max(1.0), "b={} back={}", b, back);
            prop_assert!((phi(x, back).unwrap() - p).abs() < 1e-10);
        }
    }

    #[test]
    fn tail_ratio_needs_tail() {
        let halves: Vec<Half> = (0..50)
            .map(|i| Half { positive: i % 2 == 0, entry: 1, duration: i })
            .collect();
        assert!(matches!(tail_ratio(&halves, 0, 1), Err(ExponentError::InsufficientTail(_))));
        let d = IncrementDistribution::simple();
        assert!(matches!(
            estimate_b_tail(&d, 100, 1, Workers::new(1)),
            Err(ExponentError::InsufficientTail(_))
        ));
    }
}
