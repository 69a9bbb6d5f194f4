//! The α = 1/2 zero-shift stable family `Z[κ, c]`.
//!
//! Characteristic function `E exp(itZ) = exp(−c|t|^{1/2}(1 − iκ·sgn t))`.
//! Because `λZ` has scale `c·λ^{1/2}`, a draw with scale `c` is `c²` times a
//! standard (`c = 1`) draw. `κ = 1` is the one-sided Lévy law with density
//! `(2π)^{-1/2} e^{−1/(2t)} t^{−3/2}`.

use std::f64::consts::{FRAC_PI_2, PI};

use statrs::function::erf::erfc;
use thiserror::Error;

use crate::parallel::{map_trials, Workers};
use crate::rng::{Domain, RandomStream, StreamFactory};

#[derive(Debug, Error, PartialEq)]
pub enum StableError {
    #[error("skewness {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("scale {0} must be positive")]
    NonPositiveScale(f64),
    #[error("uniform angle {0} sits on the boundary of (-pi/2, pi/2)")]
    DegenerateUniform(f64),
    #[error("argument {0} must be positive")]
    NonPositiveArgument(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableParams {
    kappa: f64,
    scale: f64,
}

impl StableParams {
    pub fn new(kappa: f64, scale: f64) -> Result<Self, StableError> {
        check_kappa(kappa)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(StableError::NonPositiveScale(scale));
        }
        Ok(Self { kappa, scale })
    }

    pub fn standard(kappa: f64) -> Result<Self, StableError> {
        Self::new(kappa, 1.0)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `c` in the characteristic function.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Factor applied to a standard draw: `c²`.
    pub fn multiplier(&self) -> f64 {
        self.scale * self.scale
    }

    /// `E exp(itZ)` as `(re, im)`.
    pub fn characteristic(&self, t: f64) -> (f64, f64) {
        let a = self.scale * t.abs().sqrt();
        let modulus = (-a).exp();
        let angle = a * self.kappa * t.signum();
        (modulus * angle.cos(), modulus * angle.sin())
    }
}

fn check_kappa(kappa: f64) -> Result<(), StableError> {
    if (-1.0..=1.0).contains(&kappa) {
        Ok(())
    } else {
        Err(StableError::OutOfRange(kappa))
    }
}

/// The inputs of one Chambers–Mallows–Stuck draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmsDraw {
    /// Uniform angle on `(−π/2, π/2)`.
    pub phi: f64,
    /// Standard exponential.
    pub w: f64,
    /// `−2·arctan(κ)`.
    pub phi0: f64,
}

impl CmsDraw {
    pub fn new(kappa: f64, phi: f64, w: f64) -> Result<Self, StableError> {
        check_kappa(kappa)?;
        if !(phi > -FRAC_PI_2 && phi < FRAC_PI_2) {
            return Err(StableError::DegenerateUniform(phi));
        }
        Ok(Self { phi, w, phi0: -2.0 * kappa.atan() })
    }

    /// `sin(½(Φ−Φ₀))/cos²Φ · cos(Φ − ½(Φ−Φ₀))/W`.
    ///
    /// This omits the `(1 + κ²)` prefactor of the general α = 1/2 CMS
    /// construction, so it is only `Z[κ,1]/(1+κ²)` in law (half a Lévy draw
    /// at κ = 1). Kept for comparison; samplers use [`CmsDraw::value`].
    pub fn printed(&self) -> f64 {
        let half = 0.5 * (self.phi - self.phi0);
        let c = self.phi.cos();
        half.sin() / (c * c) * (self.phi - half).cos() / self.w
    }

    /// A draw from `Z[κ, 1]`.
    pub fn value(&self) -> f64 {
        let k = (-0.5 * self.phi0).tan();
        (1.0 + k * k) * self.printed()
    }
}

/// One draw from `Z[κ, 1]`. Consumes the uniform first, then the
/// exponential; boundary angles are redrawn.
pub fn sample_standard(kappa: f64, stream: &mut RandomStream) -> Result<f64, StableError> {
    check_kappa(kappa)?;
    loop {
        let phi = PI * (stream.open01() - 0.5);
        let w = stream.exp1();
        match CmsDraw::new(kappa, phi, w) {
            Ok(d) if w > 0.0 => return Ok(d.value()),
            _ => continue,
        }
    }
}

/// One draw from `Z[κ, c]`, i.e. `c²` times a standard draw.
pub fn sample(params: &StableParams, stream: &mut RandomStream) -> f64 {
    params.multiplier() * sample_standard(params.kappa, stream).expect("validated kappa")
}

/// `n` independent draws, draw `i` taken from stream `i` of `seed`.
pub fn sample_n(params: &StableParams, n: u64, seed: u64, workers: Workers) -> Vec<f64> {
    let factory = StreamFactory::new(seed, Domain::Sampler);
    map_trials(n, workers, |i| sample(params, &mut factory.stream(i)))
}

/// `P(Z < 0) = 1/2 − (2/π)·arctan κ`.
pub fn negativity_probability(kappa: f64) -> Result<f64, StableError> {
    check_kappa(kappa)?;
    Ok(0.5 - 2.0 * kappa.atan() / PI)
}

fn check_coefficient(a: f64) -> Result<(), StableError> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(StableError::NonPositiveScale(a))
    }
}

/// Law of `a·Z₁ + b·Z₂` for independent standard one-sided draws: one-sided
/// with multiplier `(√a + √b)²`.
pub fn combine_sum(a: f64, b: f64) -> Result<StableParams, StableError> {
    check_coefficient(a)?;
    check_coefficient(b)?;
    StableParams::new(1.0, a.sqrt() + b.sqrt())
}

/// Law of `a·Z₁ − b·Z₂` for independent standard one-sided draws:
/// `κ = (√a − √b)/(√a + √b)`, multiplier `(√a + √b)²`.
pub fn combine_difference(a: f64, b: f64) -> Result<StableParams, StableError> {
    check_coefficient(a)?;
    check_coefficient(b)?;
    let (ra, rb) = (a.sqrt(), b.sqrt());
    StableParams::new((ra - rb) / (ra + rb), ra + rb)
}

/// Density of the standard one-sided law.
pub fn levy_pdf(t: f64) -> Result<f64, StableError> {
    if t.is_nan() || t <= 0.0 {
        return Err(StableError::NonPositiveArgument(t));
    }
    Ok((-0.5 / t).exp() / ((2.0 * PI).sqrt() * t.powf(1.5)))
}

/// Distribution function of the standard one-sided law, `erfc(1/√(2t))`.
pub fn levy_cdf(t: f64) -> Result<f64, StableError> {
    if t.is_nan() || t <= 0.0 {
        return Err(StableError::NonPositiveArgument(t));
    }
    Ok(erfc(1.0 / (2.0 * t).sqrt()))
}

/// Sample quantile by linear interpolation on a sorted slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `sup_t |F_n(t) − F(t)|` for a sorted sample.
pub fn ks_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance between sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}
