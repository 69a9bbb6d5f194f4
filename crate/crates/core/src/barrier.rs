//! The moving barrier `x·s` and the inequality used against it.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BarrierError {
    #[error("cannot parse barrier fraction {0:?}")]
    Parse(String),
    #[error("barrier fraction {0} outside [0, 1)")]
    OutOfRange(String),
}

/// A rational barrier slope `x = num/den` with `0 <= x < 1`, kept in lowest
/// terms so that comparisons `den·Σsgn` vs `num·s` are exact integer tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Barrier {
    num: i64,
    den: i64,
}

impl Barrier {
    pub const ZERO: Barrier = Barrier { num: 0, den: 1 };

    pub fn new(num: i64, den: i64) -> Result<Self, BarrierError> {
        if den == 0 {
            return Err(BarrierError::Parse(format!("{num}/{den}")));
        }
        let r = Ratio::new(num, den);
        let (n, d) = (*r.numer(), *r.denom());
        if n < 0 || n >= d {
            return Err(BarrierError::OutOfRange(format!("{n}/{d}")));
        }
        Ok(Self { num: n, den: d })
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn ratio(&self) -> Ratio<i128> {
        Ratio::new(self.num as i128, self.den as i128)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `den·sign_sum − num·s`; the sign-sum condition at time `s` reads
    /// `gap > 0` (strict) or `gap >= 0` (weak).
    #[inline]
    pub fn gap(&self, sign_sum: i64, s: u64) -> i128 {
        self.den as i128 * sign_sum as i128 - self.num as i128 * s as i128
    }
}

impl fmt::Display for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Accepts `p/q`, an integer, or a terminating decimal such as `0.25`.
impl FromStr for Barrier {
    type Err = BarrierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let bad = || BarrierError::Parse(s.to_string());
        if let Some((a, b)) = t.split_once('/') {
            let n: i64 = a.trim().parse().map_err(|_| bad())?;
            let d: i64 = b.trim().parse().map_err(|_| bad())?;
            return Barrier::new(n, d);
        }
        if let Some((int, frac)) = t.split_once('.') {
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let whole: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            if int.starts_with('-') {
                return Err(BarrierError::OutOfRange(s.to_string()));
            }
            let den = 10i64.pow(frac.len() as u32);
            let f: i64 = frac.parse().map_err(|_| bad())?;
            return Barrier::new(whole * den + f, den);
        }
        let n: i64 = t.parse().map_err(|_| bad())?;
        Barrier::new(n, 1)
    }
}

/// Which inequality the sign-sum must satisfy against the barrier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `Σ sgn(S_i) > x·s`
    #[default]
    Strict,
    /// `Σ sgn(S_i) >= x·s`
    Weak,
}

impl Mode {
    #[inline]
    pub fn holds(self, gap: i128) -> bool {
        match self {
            Mode::Strict => gap > 0,
            Mode::Weak => gap >= 0,
        }
    }
}

impl FromStr for Mode {
    type Err = BarrierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "strict" => Ok(Mode::Strict),
            "weak" => Ok(Mode::Weak),
            other => Err(BarrierError::Parse(other.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Strict => "strict",
            Mode::Weak => "weak",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!("1/2".parse::<Barrier>().unwrap(), Barrier::new(1, 2).unwrap());
        assert_eq!("2/4".parse::<Barrier>().unwrap(), Barrier::new(1, 2).unwrap());
        assert_eq!("0.25".parse::<Barrier>().unwrap(), Barrier::new(1, 4).unwrap());
        assert_eq!("0".parse::<Barrier>().unwrap(), Barrier::ZERO);
        assert_eq!(".6".parse::<Barrier>().unwrap(), Barrier::new(3, 5).unwrap());
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!("1".parse::<Barrier>(), Err(BarrierError::OutOfRange(_))));
        assert!(matches!("-1/3".parse::<Barrier>(), Err(BarrierError::OutOfRange(_))));
        assert!(matches!("abc".parse::<Barrier>(), Err(BarrierError::Parse(_))));
        assert!("1/0".parse::<Barrier>().is_err());
    }

    #[test]
    fn gap_is_exact_at_ties() {
        let x = Barrier::new(1, 2).unwrap();
        // Σsgn = 2 at s = 4 sits exactly on the barrier.
        assert_eq!(x.gap(2, 4), 0);
        assert!(!Mode::Strict.holds(x.gap(2, 4)));
        assert!(Mode::Weak.holds(x.gap(2, 4)));
    }
}
