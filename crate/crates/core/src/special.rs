//! Scalar functions of the unitless damping argument `ε`.
//!
//! The closed-form spring solution and its parameter derivatives are written
//! in terms of a handful of even functions of `ε` that all have removable
//! singularities at `ε = 0`. Each is evaluated by a truncated Taylor series
//! below a crossover threshold and by the direct formula above it, so the
//! result is accurate (and exact at zero) across the critical-damping
//! manifold where `ε → 0`.
//!
//! All functions are even in `ε`; negative arguments are accepted and
//! treated as `|ε|`.

use crate::error::{Error, Result};

/// Series crossover for [`sinhc`] and [`sinc_e`].
pub const SINC_SERIES_THRESHOLD: f64 = 1e-2;

/// Series crossover for [`h_over`] and [`h_under`].
pub const H_SERIES_THRESHOLD: f64 = 5e-2;

/// Nonnegative, finite `ε`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!(
                "epsilon must be finite and nonnegative, got {value}"
            )))
        }
    }

    pub const fn zero() -> Self {
        Self(0.0)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn cosh_e(self) -> f64 {
        cosh_e(self.0)
    }

    #[inline]
    pub fn sinhc(self) -> f64 {
        sinhc(self.0)
    }

    #[inline]
    pub fn sinc_e(self) -> f64 {
        sinc_e(self.0)
    }

    #[inline]
    pub fn h_over(self) -> f64 {
        h_over(self.0)
    }

    #[inline]
    pub fn h_under(self) -> f64 {
        h_under(self.0)
    }
}

/// `(e^ε + e^-ε) / 2`.
#[inline]
pub fn cosh_e(eps: f64) -> f64 {
    eps.cosh()
}

/// `sinh(ε) / ε`, equal to 1 at zero.
#[inline]
pub fn sinhc(eps: f64) -> f64 {
    let e = eps.abs();
    if e < SINC_SERIES_THRESHOLD {
        let e2 = e * e;
        1.0 + e2 * (1.0 / 6.0 + e2 / 120.0)
    } else {
        e.sinh() / e
    }
}

/// `sin(ε) / ε`, equal to 1 at zero.
#[inline]
pub fn sinc_e(eps: f64) -> f64 {
    let e = eps.abs();
    if e < SINC_SERIES_THRESHOLD {
        let e2 = e * e;
        1.0 - e2 * (1.0 / 6.0 - e2 / 120.0)
    } else {
        e.sin() / e
    }
}

// Coefficients of sum_k 2k/(2k+1)! z^(k-1) for k = 1..5, shared by both
// h-functions (the underdamped one alternates sign in z = ε²).
const H_SERIES: [f64; 5] = [
    1.0 / 3.0,
    1.0 / 30.0,
    1.0 / 840.0,
    1.0 / 45360.0,
    1.0 / 3991680.0,
];

#[inline]
fn h_series(z: f64) -> f64 {
    H_SERIES.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

/// `((ε-1)e^ε + (ε+1)e^-ε) / (2ε³)`, i.e. `(ε cosh ε - sinh ε) / ε³`;
/// equal to 1/3 at zero.
#[inline]
pub fn h_over(eps: f64) -> f64 {
    let e = eps.abs();
    if e < H_SERIES_THRESHOLD {
        h_series(e * e)
    } else {
        (e * e.cosh() - e.sinh()) / (e * e * e)
    }
}

/// `(sin ε - ε cos ε) / ε³`, equal to 1/3 at zero.
#[inline]
pub fn h_under(eps: f64) -> f64 {
    let e = eps.abs();
    if e < H_SERIES_THRESHOLD {
        h_series(-e * e)
    } else {
        (e.sin() - e * e.cos()) / (e * e * e)
    }
}

/// Exponentially scaled overdamped basis `e^-a · {cosh ε, sinhc ε, h_over ε}`.
///
/// Takes `ε` together with the two decay rates `a - ε ≥ 0` and `a + ε`. For
/// large `ε` the unscaled values overflow while `e^-a` underflows, so the
/// exponents are combined before exponentiating.
#[inline]
pub(crate) fn scaled_over(eps: f64, slow: f64, fast: f64) -> (f64, f64, f64) {
    if eps <= 1.0 {
        let decay = (-0.5 * (slow + fast)).exp();
        (decay * cosh_e(eps), decay * sinhc(eps), decay * h_over(eps))
    } else {
        let up = (-slow).exp();
        let down = (-fast).exp();
        let e3 = eps * eps * eps;
        (
            0.5 * (up + down),
            0.5 * (up - down) / eps,
            0.5 * ((eps - 1.0) * up + (eps + 1.0) * down) / e3,
        )
    }
}

/// `φ₁(x) = (eˣ - 1)/x`, `φ₂(x) = (φ₁ - 1)/x`, `φ₃(x) = (φ₂ - ½)/x`.
///
/// Taylor series `Σ xⁿ/(n + k)!` for `|x| ≤ 1`, the recursions otherwise.
pub(crate) fn phi123(x: f64) -> (f64, f64, f64) {
    if x.abs() <= 1.0 {
        // term = xⁿ/(n+1)!; φ₂ and φ₃ reuse it with extra divisors.
        let (mut p1, mut p2, mut p3) = (0.0, 0.0, 0.0);
        let mut term = 1.0;
        for n in 0..24 {
            let n = n as f64;
            p1 += term;
            p2 += term / (n + 2.0);
            p3 += term / ((n + 2.0) * (n + 3.0));
            term *= x / (n + 2.0);
        }
        (p1, p2, p3)
    } else {
        let p1 = x.exp_m1() / x;
        let p2 = (p1 - 1.0) / x;
        (p1, p2, (p2 - 0.5) / x)
    }
}
