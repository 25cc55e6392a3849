//! C¹ piecewise-cubic target curves through uniformly spaced samples.
//!
//! On the interval between samples `n` and `n + 1` the target is
//! `x̂(tⁿ + sΔt) = q s³ + a s² + b s + c` for `s ∈ [0, 1]`, with the powers of
//! `Δt` folded into the coefficients. The endpoint tangents are central
//! differences of the neighbouring samples (one-sided at either end of the
//! track), so consecutive intervals share position and velocity.

use crate::error::{Error, Result};
use crate::Vec3;

/// Uniformly sampled positions of one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrack {
    positions: Vec<Vec3>,
    dt: f64,
}

impl SampleTrack {
    pub fn new(positions: Vec<Vec3>, dt: f64) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidTrack(format!(
                "need at least 2 samples, got {}",
                positions.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidTrack(format!("dt must be positive, got {dt}")));
        }
        if let Some(n) = positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidTrack(format!("non-finite position at sample {n}")));
        }
        Ok(Self { positions, dt })
    }

    /// Track with every axis set to the same scalar sample, handy in tests.
    pub fn from_scalars(values: &[f64], dt: f64) -> Result<Self> {
        Self::new(values.iter().map(|&v| Vec3::repeat(v)).collect(), dt)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    #[inline]
    pub fn num_intervals(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn central_difference(&self, n: usize) -> Result<Vec3> {
        central_difference(self, n)
    }

    pub fn interval(&self, n: usize) -> Result<CubicInterval> {
        build_interval(self, n)
    }

    /// All `N - 1` intervals in order.
    pub fn intervals(&self) -> impl Iterator<Item = CubicInterval> + '_ {
        (0..self.num_intervals()).map(move |n| self.interval_unchecked(n))
    }

    /// Target velocity `dx̂/dt` at sample `n`.
    pub fn sample_velocity(&self, n: usize) -> Result<Vec3> {
        Ok(self.central_difference(n)? / self.dt)
    }

    #[inline]
    fn difference_unchecked(&self, n: usize) -> Vec3 {
        let p = &self.positions;
        let last = p.len() - 1;
        endpoint_tangent(
            if n > 0 { Some(&p[n - 1]) } else { None },
            &p[n],
            if n < last { Some(&p[n + 1]) } else { None },
        )
    }

    #[inline]
    pub(crate) fn interval_unchecked(&self, n: usize) -> CubicInterval {
        let d0 = self.difference_unchecked(n);
        let d1 = self.difference_unchecked(n + 1);
        CubicInterval::hermite(&self.positions[n], &self.positions[n + 1], &d0, &d1)
    }
}

/// Sample tangent (per sample step) from whichever neighbours exist: central
/// in the interior, one-sided at either end.
#[inline]
pub fn endpoint_tangent(prev: Option<&Vec3>, cur: &Vec3, next: Option<&Vec3>) -> Vec3 {
    match (prev, next) {
        (Some(p), Some(n)) => 0.5 * (n - p),
        (None, Some(n)) => n - cur,
        (Some(p), None) => cur - p,
        (None, None) => Vec3::zeros(),
    }
}

/// Cubic coefficients of one interval, powers of `Δt` absorbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicInterval {
    pub q: Vec3,
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl CubicInterval {
    /// Cubic with endpoint values `x0`, `x1` and endpoint tangents `d0`, `d1`
    /// (tangents in units of length per sample step).
    #[inline]
    pub fn hermite(x0: &Vec3, x1: &Vec3, d0: &Vec3, d1: &Vec3) -> Self {
        let dx = x1 - x0;
        Self {
            q: -2.0 * dx + d0 + d1,
            a: 3.0 * dx - 2.0 * d0 - d1,
            b: *d0,
            c: *x0,
        }
    }

    pub fn constant(c: Vec3) -> Self {
        Self {
            q: Vec3::zeros(),
            a: Vec3::zeros(),
            b: Vec3::zeros(),
            c,
        }
    }

    /// `q s³ + a s² + b s + c`.
    #[inline]
    pub fn position(&self, s: f64) -> Vec3 {
        ((self.q * s + self.a) * s + self.b) * s + self.c
    }

    /// Time derivative `(3q s² + 2a s + b) / Δt`.
    #[inline]
    pub fn velocity(&self, s: f64, dt: f64) -> Vec3 {
        ((3.0 * s) * self.q * s + (2.0 * s) * self.a + self.b) / dt
    }

    /// Second time derivative `(6q s + 2a) / Δt²`.
    #[inline]
    pub fn acceleration(&self, s: f64, dt: f64) -> Vec3 {
        (6.0 * s * self.q + 2.0 * self.a) / (dt * dt)
    }
}

/// Central difference `½(xⁿ⁺¹ - xⁿ⁻¹)`, one-sided at the first and last sample.
pub fn central_difference(track: &SampleTrack, n: usize) -> Result<Vec3> {
    if n >= track.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: track.len(),
        });
    }
    Ok(track.difference_unchecked(n))
}

/// Cubic for the interval `[tⁿ, tⁿ⁺¹]`.
pub fn build_interval(track: &SampleTrack, n: usize) -> Result<CubicInterval> {
    if n + 1 >= track.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: track.len(),
        });
    }
    Ok(track.interval_unchecked(n))
}

pub fn eval_target(iv: &CubicInterval, s: f64) -> Vec3 {
    iv.position(s)
}

pub fn eval_target_velocity(iv: &CubicInterval, s: f64, dt: f64) -> Vec3 {
    iv.velocity(s, dt)
}
