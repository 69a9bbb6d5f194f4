//! Exact small-horizon probabilities by forward dynamic programming in
//! rational arithmetic, and an exhaustive check that the sign-sum event
//! read at `t_{2k}` coincides with the excursion event `W_1..W_k ≥ 0`.
//!
//! The DP state is `(position, carried sign, sign-sum)`, plus the number of
//! crossings seen for excursion events. The next sign depends only on the
//! next position and the carried sign, the sign-sum update only on the next
//! sign, and both survival tests only on `(sign-sum, s)`; so no further
//! history is needed. See `docs/oracle-state.md` for the full argument.
//!
//! Masses at step `s` are kept as integer numerators over `D^s`, where `D`
//! is the common denominator of the increment law.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::barrier::{Barrier, Mode};
use crate::increments::IncrementDistribution;
use crate::walk::{carried_sign, decompose, first_violation_streaming, xi_sequence, Path, ReplaySteps};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("horizon {requested} exceeds the configured cap {cap}")]
    CapExceeded { requested: u64, cap: u64 },
}

pub const DEFAULT_CAP: u64 = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DpOptions {
    pub cap: u64,
    /// Visit states in descending instead of ascending order.
    pub reverse_order: bool,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, reverse_order: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DpState {
    pub position: i64,
    pub carried_sign: i8,
    pub sign_sum: i64,
    pub crossings_seen: u32,
}

/// Alive and absorbed mass after each step, as numerators over `D^s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DpTrace {
    pub denominator: BigUint,
    pub alive: Vec<BigUint>,
    pub absorbed: Vec<BigUint>,
}

impl DpTrace {
    fn new(denominator: BigUint) -> Self {
        Self { denominator, alive: vec![BigUint::one()], absorbed: vec![BigUint::zero()] }
    }

    /// `alive + absorbed == D^s` at every step.
    pub fn conserves_mass(&self) -> bool {
        let mut total = BigUint::one();
        for (a, d) in self.alive.iter().zip(&self.absorbed) {
            if a + d != total {
                return false;
            }
            total *= &self.denominator;
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtildeExact {
    pub probability: BigRational,
    pub trace: DpTrace,
}

fn ordered(layer: HashMap<DpState, BigUint>, reverse: bool) -> Vec<(DpState, BigUint)> {
    let mut v: Vec<_> = layer.into_iter().collect();
    v.sort_unstable_by_key(|e| e.0);
    if reverse {
        v.reverse();
    }
    v
}

fn check_cap(t: u64, cap: u64) -> Result<(), OracleError> {
    if t > cap {
        return Err(OracleError::CapExceeded { requested: t, cap });
    }
    Ok(())
}

/// `P(Σ_{i≤s} sgn(S_i) ⋛ x·s for all 1 ≤ s ≤ t)` exactly.
pub fn exact_atilde(
    dist: &IncrementDistribution,
    x: Barrier,
    t: u64,
    mode: Mode,
    opts: DpOptions,
) -> Result<AtildeExact, OracleError> {
    check_cap(t, opts.cap)?;
    let (den, weights) = dist.common_denominator();
    let mut trace = DpTrace::new(den.clone());
    let mut layer: HashMap<DpState, BigUint> = HashMap::new();
    layer.insert(
        DpState { position: 0, carried_sign: 1, sign_sum: 0, crossings_seen: 0 },
        BigUint::one(),
    );
    let mut absorbed = BigUint::zero();
    for s in 1..=t {
        let mut next: HashMap<DpState, BigUint> = HashMap::with_capacity(layer.len() * 2);
        absorbed *= &den;
        for (st, mass) in ordered(layer, opts.reverse_order) {
            for (v, w) in &weights {
                let position = st.position + v;
                let sign = carried_sign(position, st.carried_sign);
                let sign_sum = st.sign_sum + sign as i64;
                let m = &mass * w;
                if mode.holds(x.gap(sign_sum, s)) {
                    let key = DpState { position, carried_sign: sign, sign_sum, crossings_seen: 0 };
                    *next.entry(key).or_default() += m;
                } else {
                    absorbed += m;
                }
            }
        }
        layer = next;
        trace.alive.push(layer.values().sum());
        trace.absorbed.push(absorbed.clone());
    }
    let alive = trace.alive.last().unwrap().clone();
    let probability = BigRational::new(alive.into(), den.pow(t as u32).into());
    Ok(AtildeExact { probability, trace })
}

/// Certified bracket for the excursion event.
#[derive(Clone, Debug, PartialEq)]
pub struct Bracket {
    pub lower: BigRational,
    pub upper: BigRational,
    pub trace: DpTrace,
}

impl Bracket {
    pub fn width(&self) -> BigRational {
        &self.upper - &self.lower
    }
}

/// Bounds on `P(sign-sum condition holds for all 1 ≤ s ≤ t_{2k})` from paths
/// of length `t_cap`: paths that complete `2k` crossings in time count
/// towards both bounds, paths still undecided at `t_cap` towards the upper
/// bound only.
///
/// Crossing `t_i = s` is recognised on the step `s → s+1` where the carried
/// sign flips (a negative first step gives `t_1 = 0`).
pub fn exact_a(
    dist: &IncrementDistribution,
    x: Barrier,
    k: u32,
    t_cap: u64,
    mode: Mode,
    opts: DpOptions,
) -> Result<Bracket, OracleError> {
    check_cap(t_cap, opts.cap)?;
    let (den, weights) = dist.common_denominator();
    let mut trace = DpTrace::new(den.clone());
    if k == 0 {
        let one = BigRational::one();
        return Ok(Bracket { lower: one.clone(), upper: one, trace });
    }
    let mut layer: HashMap<DpState, BigUint> = HashMap::new();
    layer.insert(
        DpState { position: 0, carried_sign: 1, sign_sum: 0, crossings_seen: 0 },
        BigUint::one(),
    );
    let mut success = BigUint::zero();
    let mut failed = BigUint::zero();
    for s in 0..t_cap {
        let mut next: HashMap<DpState, BigUint> = HashMap::with_capacity(layer.len() * 2);
        success *= &den;
        failed *= &den;
        for (st, mass) in ordered(layer, opts.reverse_order) {
            for (v, w) in &weights {
                let position = st.position + v;
                let sign = carried_sign(position, st.carried_sign);
                let crossings = st.crossings_seen + (sign != st.carried_sign) as u32;
                let m = &mass * w;
                if crossings == 2 * k {
                    success += m;
                    continue;
                }
                let sign_sum = st.sign_sum + sign as i64;
                if mode.holds(x.gap(sign_sum, s + 1)) {
                    let key = DpState { position, carried_sign: sign, sign_sum, crossings_seen: crossings };
                    *next.entry(key).or_default() += m;
                } else {
                    failed += m;
                }
            }
        }
        layer = next;
        let alive: BigUint = layer.values().sum();
        trace.alive.push(&alive + &success);
        trace.absorbed.push(failed.clone());
    }
    let total: BigRational = BigRational::from_integer(den.pow(t_cap as u32).into());
    let lower = BigRational::from_integer(success.clone().into()) / &total;
    let upper = BigRational::from_integer((trace.alive.last().unwrap().clone()).into()) / &total;
    Ok(Bracket { lower, upper, trace })
}

/// Exact decimal rendering of a rational, truncated to `digits` places.
pub fn decimal(r: &BigRational, digits: usize) -> String {
    let neg = r < &BigRational::zero();
    let r = if neg { -r.clone() } else { r.clone() };
    let int = r.to_integer();
    let mut frac = r - BigRational::from_integer(int.clone());
    let mut out = format!("{}{}", if neg { "-" } else { "" }, int);
    if frac.is_zero() {
        return out;
    }
    out.push('.');
    let ten = BigRational::from_integer(10.into());
    for _ in 0..digits {
        frac *= &ten;
        let d = frac.to_integer();
        out.push_str(&d.to_string());
        frac -= BigRational::from_integer(d);
        if frac.is_zero() {
            break;
        }
    }
    out
}

/// A path on which the two readings disagree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub steps: Vec<i64>,
    pub k: usize,
    pub sign_sum_event: bool,
    pub excursion_event: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierReport {
    pub x: String,
    /// `(path, k)` pairs compared.
    pub checked: u64,
    pub counterexamples: u64,
    /// Up to [`MAX_REPORTED`] counterexamples, verbatim.
    pub examples: Vec<Counterexample>,
    /// Paths on which strict and weak sign-sum conditions differ.
    pub mode_sensitive_paths: u64,
    pub mode_sensitive_example: Option<Vec<i64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub max_len: usize,
    pub paths: u64,
    pub barriers: Vec<BarrierReport>,
}

impl EquivalenceReport {
    pub fn counterexamples(&self) -> u64 {
        self.barriers.iter().map(|b| b.counterexamples).sum()
    }
}

pub const MAX_REPORTED: usize = 10;
pub const EQUIVALENCE_BARRIERS: [(i64, i64); 4] = [(0, 1), (1, 4), (1, 2), (3, 4)];

/// Exhaustively compares, on every simple-walk path of length `max_len`
/// and every `k` with `t_{2k}` visible on the path, the weak sign-sum
/// condition up to `t_{2k}` against `W_1, ..., W_k ≥ 0`.
pub fn equivalence_check(max_len: usize) -> EquivalenceReport {
    equivalence_check_with(max_len, &EQUIVALENCE_BARRIERS)
}

pub fn equivalence_check_with(max_len: usize, barriers: &[(i64, i64)]) -> EquivalenceReport {
    assert!(max_len <= 24, "exhaustive enumeration limited to 2^24 paths");
    let paths = 1u64 << max_len;
    let mut reports: Vec<BarrierReport> = barriers
        .iter()
        .map(|&(p, q)| BarrierReport {
            x: Barrier::new(p, q).expect("valid barrier").to_string(),
            checked: 0,
            counterexamples: 0,
            examples: Vec::new(),
            mode_sensitive_paths: 0,
            mode_sensitive_example: None,
        })
        .collect();
    let mut steps = vec![0i64; max_len];
    for bits in 0..paths {
        for (j, st) in steps.iter_mut().enumerate() {
            *st = if bits >> j & 1 == 1 { 1 } else { -1 };
        }
        let path = Path::from_steps(&steps);
        let dec = decompose(&path);
        for (&(p, q), rep) in barriers.iter().zip(reports.iter_mut()) {
            let x = Barrier::new(p, q).expect("valid barrier");
            let weak = first_violation_streaming(&mut ReplaySteps::new(&steps), x, Mode::Weak, max_len as u64);
            let strict = first_violation_streaming(&mut ReplaySteps::new(&steps), x, Mode::Strict, max_len as u64);
            if weak != strict {
                rep.mode_sensitive_paths += 1;
                rep.mode_sensitive_example.get_or_insert_with(|| steps.clone());
            }
            let xi = xi_sequence(&dec, x);
            for k in 1..=dec.complete_excursions {
                let t2k = dec.crossing_times[2 * k - 1];
                let sign_sum_event = weak.is_none_or(|v| v > t2k);
                let excursion_event = xi.survives(k, Mode::Weak);
                rep.checked += 1;
                if sign_sum_event != excursion_event {
                    rep.counterexamples += 1;
                    if rep.examples.len() < MAX_REPORTED {
                        rep.examples.push(Counterexample {
                            steps: steps.clone(),
                            k,
                            sign_sum_event,
                            excursion_event,
                        });
                    }
                }
            }
        }
    }
    EquivalenceReport { max_len, paths, barriers: reports }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn x0() -> Barrier {
        Barrier::new(0, 1).unwrap()
    }

    #[test]
    fn srw_small_horizons() {
        let d = IncrementDistribution::simple();
        let want = [q(1, 2), q(1, 2), q(1, 2), q(3, 8)];
        for (t, w) in (1..=4).zip(want) {
            let r = exact_atilde(&d, x0(), t, Mode::Strict, DpOptions::default()).unwrap();
            assert_eq!(r.probability, w, "t={t}");
            assert!(r.trace.conserves_mass());
        }
    }

    /// Brute force over all paths, independent of the DP.
    fn brute_atilde(t: usize, x: Barrier, mode: Mode) -> BigRational {
        let mut good = 0i64;
        for bits in 0..1u64 << t {
            let steps: Vec<i64> = (0..t).map(|j| if bits >> j & 1 == 1 { 1 } else { -1 }).collect();
            if crate::walk::first_violation_time(&Path::from_steps(&steps), x, mode).is_none() {
                good += 1;
            }
        }
        q(good, 1 << t)
    }

    #[test]
    fn matches_brute_force() {
        let d = IncrementDistribution::simple();
        for (p, qq) in EQUIVALENCE_BARRIERS {
            let x = Barrier::new(p, qq).unwrap();
            for mode in [Mode::Strict, Mode::Weak] {
                for t in [1, 5, 9, 12] {
                    let r = exact_atilde(&d, x, t as u64, mode, DpOptions::default()).unwrap();
                    assert_eq!(r.probability, brute_atilde(t, x, mode), "x={x} {mode} t={t}");
                }
            }
        }
    }

    #[test]
    fn one_step_is_positive_mass() {
        let d = IncrementDistribution::from_arg("truncated-geometric:1/2:3:-1").unwrap();
        let r = exact_atilde(&d, x0(), 1, Mode::Strict, DpOptions::default()).unwrap();
        assert_eq!(r.probability, q(7, 18));
        let d = IncrementDistribution::from_arg("unit-up:-2").unwrap();
        let r = exact_atilde(&d, x0(), 1, Mode::Strict, DpOptions::default()).unwrap();
        assert_eq!(r.probability, q(2, 3));
    }

    #[test]
    fn state_order_does_not_matter() {
        let d = IncrementDistribution::from_arg("truncated-geometric:1/2:3:-1").unwrap();
        let x = Barrier::new(1, 4).unwrap();
        let a = exact_atilde(&d, x, 30, Mode::Strict, DpOptions::default()).unwrap();
        let b = exact_atilde(&d, x, 30, Mode::Strict, DpOptions { reverse_order: true, ..Default::default() }).unwrap();
        assert_eq!(a, b);
        assert!(a.trace.conserves_mass());
        let a = exact_a(&d, x, 2, 30, Mode::Weak, DpOptions::default()).unwrap();
        let b = exact_a(&d, x, 2, 30, Mode::Weak, DpOptions { reverse_order: true, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cap_is_enforced() {
        let d = IncrementDistribution::simple();
        let opts = DpOptions { cap: 10, ..Default::default() };
        assert_eq!(
            exact_atilde(&d, x0(), 11, Mode::Strict, opts).unwrap_err(),
            OracleError::CapExceeded { requested: 11, cap: 10 }
        );
        assert!(exact_a(&d, x0(), 1, 11, Mode::Weak, opts).is_err());
    }

    #[test]
    fn excursion_bracket() {
        let d = IncrementDistribution::simple();
        let b = exact_a(&d, x0(), 0, 5, Mode::Weak, DpOptions::default()).unwrap();
        assert_eq!((b.lower.clone(), b.upper.clone()), (q(1, 1), q(1, 1)));
        let mut last = q(1, 1);
        for t_cap in [2, 6, 10, 14, 20, 48] {
            let b = exact_a(&d, x0(), 1, t_cap, Mode::Weak, DpOptions::default()).unwrap();
            assert!(b.lower <= b.upper);
            assert!(b.width() <= last, "width grew at t_cap={t_cap}");
            assert!(b.trace.conserves_mass());
            last = b.width();
        }
        // Undecided mass decays like t_cap^{-1/2}; 0.2207 at t_cap = 20.
        assert!(last < q(15, 100));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(decimal(&q(3, 8), 20), "0.375");
        assert_eq!(decimal(&q(1, 3), 5), "0.33333");
        assert_eq!(decimal(&q(1, 1), 5), "1");
    }

    #[test]
    fn small_equivalence_has_no_counterexamples() {
        let r = equivalence_check(10);
        assert_eq!(r.paths, 1024);
        assert_eq!(r.counterexamples(), 0, "{:?}", r.barriers);
        assert!(r.barriers.iter().all(|b| b.checked > 0));
    }
}
