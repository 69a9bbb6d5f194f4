//! Finite-support, zero-mean integer increment laws.
//!
//! Probabilities are exact rationals everywhere except inside
//! [`IncrementSampler`], which converts them once into integer thresholds.

use std::fmt;
use std::path::Path;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IncrementError {
    #[error("increment law has no atoms")]
    Empty,
    #[error("increment mean is {0}, not 0")]
    NonZeroMean(String),
    #[error("bad probabilities: {0}")]
    BadProbabilities(String),
    #[error("support must contain a positive and a negative step")]
    OneSidedSupport,
    #[error("no zero-mean assignment exists: {0}")]
    InfeasibleBalance(String),
    #[error("cannot read increment configuration: {0}")]
    Config(String),
}

/// Parses `"p/q"` or an integer string into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational, IncrementError> {
    let t = s.trim();
    let bad = || IncrementError::Config(format!("not a rational: {s:?}"));
    let (n, d) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (t, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(bad());
    }
    Ok(BigRational::new(n, d))
}

fn fmt_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// A validated zero-mean increment law on finitely many integers.
///
/// Atoms are stored sorted by value; values are distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementDistribution {
    atoms: Vec<(i64, BigRational)>,
    name: Option<String>,
}

impl IncrementDistribution {
    pub fn validate(atoms: Vec<(i64, BigRational)>) -> Result<Self, IncrementError> {
        if atoms.is_empty() {
            return Err(IncrementError::Empty);
        }
        let mut atoms = atoms;
        atoms.sort_by_key(|a| a.0);
        for w in atoms.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(IncrementError::BadProbabilities(format!(
                    "value {} listed twice",
                    w[0].0
                )));
            }
        }
        let one = BigRational::one();
        for (v, p) in &atoms {
            if !p.is_positive() || p > &one {
                return Err(IncrementError::BadProbabilities(format!(
                    "P({v}) = {} not in (0, 1]",
                    fmt_rational(p)
                )));
            }
        }
        let total: BigRational = atoms.iter().map(|a| a.1.clone()).sum();
        if total != one {
            return Err(IncrementError::BadProbabilities(format!(
                "probabilities sum to {}",
                fmt_rational(&total)
            )));
        }
        if !atoms.iter().any(|a| a.0 > 0) || !atoms.iter().any(|a| a.0 < 0) {
            return Err(IncrementError::OneSidedSupport);
        }
        let mean: BigRational = atoms
            .iter()
            .map(|(v, p)| p * BigRational::from_integer(BigInt::from(*v)))
            .sum();
        if !mean.is_zero() {
            return Err(IncrementError::NonZeroMean(fmt_rational(&mean)));
        }
        Ok(Self { atoms, name: None })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn atoms(&self) -> &[(i64, BigRational)] {
        &self.atoms
    }

    /// Largest upward step (always positive).
    pub fn max_up(&self) -> i64 {
        self.atoms.last().map(|a| a.0).unwrap_or(0)
    }

    /// Largest downward step magnitude (always positive).
    pub fn max_down(&self) -> i64 {
        -self.atoms.first().map(|a| a.0).unwrap_or(0)
    }

    pub fn variance(&self) -> BigRational {
        self.atoms
            .iter()
            .map(|(v, p)| p * BigRational::from_integer(BigInt::from(*v) * BigInt::from(*v)))
            .sum()
    }

    pub fn prob(&self, value: i64) -> BigRational {
        self.atoms
            .iter()
            .find(|a| a.0 == value)
            .map(|a| a.1.clone())
            .unwrap_or_else(BigRational::zero)
    }

    /// Writes every probability as `numerator / common_denominator`.
    pub fn common_denominator(&self) -> (BigUint, Vec<(i64, BigUint)>) {
        let den = self
            .atoms
            .iter()
            .fold(BigInt::one(), |acc, a| acc.lcm(a.1.denom()));
        let nums = self
            .atoms
            .iter()
            .map(|(v, p)| {
                let n = p.numer() * (&den / p.denom());
                (*v, n.to_biguint().expect("positive probability"))
            })
            .collect();
        (den.to_biguint().expect("positive denominator"), nums)
    }

    /// `{(+1, 1/2), (−1, 1/2)}`.
    pub fn simple() -> Self {
        let half = BigRational::new(1.into(), 2.into());
        Self::validate(vec![(1, half.clone()), (-1, half)])
            .expect("simple walk is valid")
            .with_name("simple")
    }

    /// A single `+1` step balanced against the given negative steps.
    ///
    /// `negatives` carries relative weights for the negative side; the `+1`
    /// probability is whatever makes the mean vanish.
    pub fn unit_up(negatives: &[(i64, BigRational)]) -> Result<Self, IncrementError> {
        let neg = normalize_side(negatives, false)?;
        // p·1 = (1 − p)·μ₋  ⇒  p = μ₋ / (1 + μ₋)
        let mu = side_mean_abs(&neg);
        let p_up = &mu / (BigRational::one() + &mu);
        let rest = BigRational::one() - &p_up;
        let mut atoms = vec![(1, p_up)];
        atoms.extend(neg.into_iter().map(|(v, w)| (v, w * &rest)));
        Ok(Self::validate(atoms)?.with_name("unit-up"))
    }

    /// Positive steps `1..=cutoff` with weights `p^k`, negative side rescaled
    /// so the overall mean is zero.
    pub fn truncated_geometric(
        p: &BigRational,
        cutoff: u32,
        negatives: &[(i64, BigRational)],
    ) -> Result<Self, IncrementError> {
        if !p.is_positive() || p >= &BigRational::one() {
            return Err(IncrementError::InfeasibleBalance(format!(
                "geometric ratio {} not in (0, 1)",
                fmt_rational(p)
            )));
        }
        if cutoff == 0 {
            return Err(IncrementError::InfeasibleBalance("cutoff must be >= 1".into()));
        }
        let mut pos = Vec::with_capacity(cutoff as usize);
        let mut w = p.clone();
        for k in 1..=cutoff {
            pos.push((k as i64, w.clone()));
            w *= p;
        }
        let pos = normalize_side(&pos, true)?;
        let neg = normalize_side(negatives, false)?;
        let (mu_p, mu_n) = (side_mean_abs(&pos), side_mean_abs(&neg));
        // P₊μ₊ = P₋μ₋, P₊ + P₋ = 1
        let p_pos = &mu_n / (&mu_p + &mu_n);
        let p_neg = BigRational::one() - &p_pos;
        let mut atoms: Vec<_> = pos.into_iter().map(|(v, w)| (v, w * &p_pos)).collect();
        atoms.extend(neg.into_iter().map(|(v, w)| (v, w * &p_neg)));
        Ok(Self::validate(atoms)?.with_name("truncated-geometric"))
    }

    /// Reads a distribution from a file path, inline JSON, or a preset
    /// shorthand: `simple`, `unit-up:-2,-3`, `truncated-geometric:1/2:3:-1`.
    pub fn from_arg(arg: &str) -> Result<Self, IncrementError> {
        let t = arg.trim();
        if t.starts_with('{') {
            return Self::from_json(t);
        }
        let path = Path::new(t);
        if path.is_file() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| IncrementError::Config(format!("{}: {e}", path.display())))?;
            return Self::from_json(&text);
        }
        Self::from_shorthand(t)
    }

    fn from_shorthand(s: &str) -> Result<Self, IncrementError> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default();
        let bad = || IncrementError::Config(format!("unknown distribution {s:?}"));
        let parse_negs = |list: &str| -> Result<Vec<(i64, BigRational)>, IncrementError> {
            list.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<i64>()
                        .map(|v| (v, BigRational::one()))
                        .map_err(|_| bad())
                })
                .collect()
        };
        match kind {
            "simple" | "srw" => Ok(Self::simple()),
            "unit-up" => {
                let negs = parse_negs(parts.next().ok_or_else(bad)?)?;
                Self::unit_up(&negs)
            }
            "truncated-geometric" | "trunc-geom" => {
                let p = parse_rational(parts.next().ok_or_else(bad)?)?;
                let cutoff: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let negs = parse_negs(parts.next().ok_or_else(bad)?)?;
                Self::truncated_geometric(&p, cutoff, &negs)
            }
            _ => Err(bad()),
        }
    }

    /// Parses the JSON configuration block
    /// `{"atoms": [[1, "1/2"], [-1, "1/2"]]}` or a preset object such as
    /// `{"preset": "unit-up", "negatives": [-2]}`.
    pub fn from_json(text: &str) -> Result<Self, IncrementError> {
        let cfg: DistConfig =
            serde_json::from_str(text).map_err(|e| IncrementError::Config(e.to_string()))?;
        let dist = match (cfg.atoms, cfg.preset.as_deref()) {
            (Some(atoms), None) => {
                let atoms = atoms
                    .into_iter()
                    .map(|(v, p)| Ok((v, p.to_rational()?)))
                    .collect::<Result<Vec<_>, IncrementError>>()?;
                Self::validate(atoms)?
            }
            (None, Some("simple")) => Self::simple(),
            (None, Some("unit-up")) => Self::unit_up(&weighted(cfg.negatives)?)?,
            (None, Some("truncated-geometric")) => {
                let p = cfg
                    .p
                    .ok_or_else(|| IncrementError::Config("missing \"p\"".into()))?
                    .to_rational()?;
                let cutoff = cfg
                    .cutoff
                    .ok_or_else(|| IncrementError::Config("missing \"cutoff\"".into()))?;
                Self::truncated_geometric(&p, cutoff, &weighted(cfg.negatives)?)?
            }
            (None, Some(other)) => {
                return Err(IncrementError::Config(format!("unknown preset {other:?}")))
            }
            (Some(_), Some(_)) => {
                return Err(IncrementError::Config("give either atoms or preset".into()))
            }
            (None, None) => return Err(IncrementError::Empty),
        };
        Ok(match cfg.name {
            Some(n) => dist.with_name(n),
            None => dist,
        })
    }

    /// The `{"atoms": ...}` form of this distribution.
    pub fn to_json(&self) -> String {
        let atoms: Vec<serde_json::Value> = self
            .atoms
            .iter()
            .map(|(v, p)| serde_json::json!([v, fmt_rational(p)]))
            .collect();
        let mut obj = serde_json::json!({ "atoms": atoms });
        if let Some(n) = &self.name {
            obj["name"] = serde_json::json!(n);
        }
        obj.to_string()
    }
}

impl fmt::Display for IncrementDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (v, p)) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({v:+}, {})", fmt_rational(p))?;
        }
        f.write_str("}")
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RationalField {
    Int(i64),
    Text(String),
}

impl RationalField {
    fn to_rational(&self) -> Result<BigRational, IncrementError> {
        match self {
            RationalField::Int(n) => Ok(BigRational::from_integer(BigInt::from(*n))),
            RationalField::Text(s) => parse_rational(s),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NegativeField {
    Bare(i64),
    Weighted(i64, RationalField),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DistConfig {
    name: Option<String>,
    atoms: Option<Vec<(i64, RationalField)>>,
    preset: Option<String>,
    #[serde(default)]
    negatives: Vec<NegativeField>,
    p: Option<RationalField>,
    cutoff: Option<u32>,
}

fn weighted(negs: Vec<NegativeField>) -> Result<Vec<(i64, BigRational)>, IncrementError> {
    negs.into_iter()
        .map(|n| match n {
            NegativeField::Bare(v) => Ok((v, BigRational::one())),
            NegativeField::Weighted(v, w) => Ok((v, w.to_rational()?)),
        })
        .collect()
}

/// Normalizes relative weights on one side of zero to sum to 1.
fn normalize_side(
    side: &[(i64, BigRational)],
    positive: bool,
) -> Result<Vec<(i64, BigRational)>, IncrementError> {
    let label = if positive { "positive" } else { "negative" };
    if side.is_empty() {
        return Err(IncrementError::InfeasibleBalance(format!("no {label} atoms")));
    }
    for (v, w) in side {
        if (positive && *v <= 0) || (!positive && *v >= 0) {
            return Err(IncrementError::InfeasibleBalance(format!(
                "{v} is not a {label} step"
            )));
        }
        if !w.is_positive() {
            return Err(IncrementError::InfeasibleBalance(format!(
                "weight of {v} must be positive"
            )));
        }
    }
    let total: BigRational = side.iter().map(|a| a.1.clone()).sum();
    Ok(side.iter().map(|(v, w)| (*v, w / &total)).collect())
}

fn side_mean_abs(side: &[(i64, BigRational)]) -> BigRational {
    side.iter()
        .map(|(v, w)| w * BigRational::from_integer(BigInt::from(v.abs())))
        .sum()
}

enum Lookup {
    /// All probabilities are multiples of `2^-bits`: index a table with raw bits.
    Dyadic { bits: u32, table: Vec<i64> },
    /// Cumulative thresholds on a uniform `u64`.
    Threshold { cum: Vec<u64> },
}

/// Sampling tables for an [`IncrementDistribution`].
///
/// Immutable and shareable across workers; each worker brings its own
/// stream.
pub struct IncrementSampler {
    values: Vec<i64>,
    lookup: Lookup,
    /// `P(atom j | not atoms 0..j)`, for multinomial jumps.
    conditional: Vec<f64>,
    max_up: i64,
    max_down: i64,
}

const MAX_DYADIC_BITS: u32 = 8;
const POPCOUNT_MAX: u64 = 2048;

impl IncrementSampler {
    pub fn new(dist: &IncrementDistribution) -> Self {
        let atoms = dist.atoms();
        let values: Vec<i64> = atoms.iter().map(|a| a.0).collect();

        let dyadic_bits = atoms
            .iter()
            .map(|(_, p)| {
                let d = p.denom();
                let bits = d.bits() as u32 - 1;
                (d == &(BigInt::one() << bits)).then_some(bits)
            })
            .try_fold(0u32, |acc, b| b.map(|b| acc.max(b)));

        let lookup = match dyadic_bits {
            Some(bits) if bits <= MAX_DYADIC_BITS => {
                let size = 1usize << bits;
                let mut table = Vec::with_capacity(size);
                for (v, p) in atoms {
                    let count = (p * BigRational::from_integer(BigInt::from(size)))
                        .to_integer()
                        .to_usize()
                        .expect("dyadic count");
                    table.extend(std::iter::repeat_n(*v, count));
                }
                debug_assert_eq!(table.len(), size);
                Lookup::Dyadic { bits, table }
            }
            _ => {
                let scale = BigRational::from_integer(BigInt::one() << 64);
                let mut acc = BigRational::zero();
                let mut cum = Vec::with_capacity(atoms.len());
                for (_, p) in &atoms[..atoms.len() - 1] {
                    acc += p;
                    let t = (&acc * &scale).floor().to_integer();
                    cum.push(t.to_u64().unwrap_or(u64::MAX));
                }
                Lookup::Threshold { cum }
            }
        };

        let mut remaining = BigRational::one();
        let mut conditional = Vec::with_capacity(atoms.len());
        for (_, p) in atoms {
            let c = if remaining.is_zero() { BigRational::one() } else { p / &remaining };
            conditional.push(c.to_f64().unwrap_or(1.0).min(1.0));
            remaining -= p;
        }

        Self {
            values,
            lookup,
            conditional,
            max_up: dist.max_up(),
            max_down: dist.max_down(),
        }
    }

    pub fn max_up(&self) -> i64 {
        self.max_up
    }

    pub fn max_down(&self) -> i64 {
        self.max_down
    }

    /// Random bits consumed per step on the dyadic path, if it applies.
    pub fn dyadic_bits(&self) -> Option<u32> {
        match self.lookup {
            Lookup::Dyadic { bits, .. } => Some(bits),
            Lookup::Threshold { .. } => None,
        }
    }

    /// Table lookup from `bits` raw random bits (dyadic laws only).
    #[inline]
    pub fn from_bits(&self, raw: u64) -> i64 {
        match &self.lookup {
            Lookup::Dyadic { table, .. } => table[raw as usize & (table.len() - 1)],
            Lookup::Threshold { .. } => self.from_u64(raw),
        }
    }

    /// Maps one uniform `u64` to an atom.
    #[inline]
    pub fn from_u64(&self, u: u64) -> i64 {
        match &self.lookup {
            Lookup::Dyadic { bits, table } => {
                if *bits == 0 {
                    table[0]
                } else {
                    table[(u >> (64 - bits)) as usize]
                }
            }
            Lookup::Threshold { cum } => {
                let idx = cum.iter().position(|&c| u < c).unwrap_or(cum.len());
                self.values[idx]
            }
        }
    }

    /// One increment, consuming exactly one `u64` from the stream.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> i64 {
        self.from_u64(rng.next_u64())
    }

    /// Sum of `m` independent increments, drawn as a multinomial split of the
    /// `m` steps over the atoms.
    pub fn sample_sum<R: RngCore + ?Sized>(&self, m: u64, rng: &mut R) -> i64 {
        // Two atoms at 1/2 each: counting set bits beats a binomial draw
        // for short jumps.
        if let Lookup::Dyadic { bits: 1, table } = &self.lookup {
            if m <= POPCOUNT_MAX {
                let mut ones = 0u64;
                let mut left = m;
                while left >= 64 {
                    ones += rng.next_u64().count_ones() as u64;
                    left -= 64;
                }
                if left > 0 {
                    ones += (rng.next_u64() & ((1u64 << left) - 1)).count_ones() as u64;
                }
                return table[0] * (m - ones) as i64 + table[1] * ones as i64;
            }
        }
        let mut remaining = m;
        let mut total = 0i64;
        let last = self.values.len() - 1;
        for (j, &v) in self.values.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            let n = if j == last {
                remaining
            } else {
                let p = self.conditional[j];
                if p >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining, p).expect("valid binomial").sample(rng)
                }
            };
            total += v * n as i64;
            remaining -= n;
        }
        total
    }
}
