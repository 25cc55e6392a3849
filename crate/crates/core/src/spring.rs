//! Closed-form integration of `ẍ = ks (x̂ - x) + kd (ẋ̂ - ẋ)` over one cubic
//! target interval.
//!
//! On each interval the solution is `x(τ) = e^{-kd τ/2} g(τ) + p(τ)` with
//! `τ = sΔt`. `p` is the polynomial particular solution tracking the cubic
//! target and `g` is the homogeneous part fixed by the state at the start of
//! the interval through `γ₁`, `γ₂`. Depending on the sign of the discriminant
//! `kd² - 4ks`, `g` is built from `cosh`/`sinhc` (overdamped) or
//! `cos`/`sinc` (underdamped); both reduce to `γ₁ + γ₂τ` at critical damping,
//! and the guarded functions in [`crate::special`] make the transition
//! continuous.

use crate::error::{Error, Result};
use crate::kinematics::{CubicInterval, SampleTrack};
use crate::special::{cosh_e, h_under, phi123, scaled_over, sinc_e, sinhc};
use crate::Vec3;

/// Relative tolerance on `kd² - 4ks` (scaled by `4ks`) below which a spring
/// is labelled critically damped.
pub const CRITICAL_TOLERANCE: f64 = 1e-9;

/// Mass-normalised stiffness (1/s²) and damping (1/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpringParams {
    pub ks: f64,
    pub kd: f64,
}

impl SpringParams {
    pub fn new(ks: f64, kd: f64) -> Result<Self> {
        if !(ks.is_finite() && ks > 0.0) {
            return Err(Error::InvalidParams(format!("ks must be positive, got {ks}")));
        }
        if !(kd.is_finite() && kd >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "kd must be nonnegative, got {kd}"
            )));
        }
        Ok(Self { ks, kd })
    }

    /// Critically damped spring of the given stiffness.
    pub fn critical(ks: f64) -> Result<Self> {
        Self::new(ks, 2.0 * ks.sqrt())
    }

    /// `kd² - 4ks`.
    #[inline]
    pub fn discriminant(&self) -> f64 {
        self.kd * self.kd - 4.0 * self.ks
    }

    pub fn regime(&self) -> DampingRegime {
        classify(self, CRITICAL_TOLERANCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    Overdamped,
    Underdamped,
    Critical,
}

impl RegimeKind {
    pub fn label(self) -> &'static str {
        match self {
            RegimeKind::Overdamped => "overdamped",
            RegimeKind::Underdamped => "underdamped",
            RegimeKind::Critical => "critical",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "overdamped" => Some(RegimeKind::Overdamped),
            "underdamped" => Some(RegimeKind::Underdamped),
            "critical" => Some(RegimeKind::Critical),
            _ => None,
        }
    }
}

impl std::fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingRegime {
    pub kind: RegimeKind,
    /// `|kd² - 4ks|`.
    pub omega2: f64,
}

pub fn classify(params: &SpringParams, tol: f64) -> DampingRegime {
    let disc = params.discriminant();
    let band = tol * 4.0 * params.ks;
    let kind = if disc > band {
        RegimeKind::Overdamped
    } else if disc < -band {
        RegimeKind::Underdamped
    } else {
        RegimeKind::Critical
    };
    DampingRegime {
        kind,
        omega2: disc.abs(),
    }
}

/// Position and velocity of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub x: Vec3,
    pub v: Vec3,
}

impl ParticleState {
    pub fn new(x: Vec3, v: Vec3) -> Self {
        Self { x, v }
    }

    pub fn at_rest(x: Vec3) -> Self {
        Self { x, v: Vec3::zeros() }
    }
}

/// Homogeneous-solution coefficients `γ₁ = xⁿ - p(tⁿ)` and
/// `γ₂ = ẋⁿ + (kd/2)γ₁ - ṗ(tⁿ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gammas {
    pub g1: Vec3,
    pub g2: Vec3,
}

/// `p = x̂ - ẍ̂/ks + kd x⃛̂/ks²` and its time derivative at `s`.
#[inline]
pub fn particular(iv: &CubicInterval, params: &SpringParams, s: f64, dt: f64) -> (Vec3, Vec3) {
    let SpringParams { ks, kd } = *params;
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let p = iv.position(s) - (6.0 * s * iv.q + 2.0 * iv.a) / (ks * dt2)
        + (6.0 * kd / (ks * ks * dt3)) * iv.q;
    let pdot = iv.velocity(s, dt) - (6.0 / (ks * dt3)) * iv.q;
    (p, pdot)
}

#[inline]
pub fn gammas(state: &ParticleState, iv: &CubicInterval, params: &SpringParams, dt: f64) -> Gammas {
    let (p0, pdot0) = particular(iv, params, 0.0, dt);
    let g1 = state.x - p0;
    let g2 = state.v + 0.5 * params.kd * g1 - pdot0;
    Gammas { g1, g2 }
}

/// Decay-weighted homogeneous basis at one `τ`.
///
/// With `E = e^{-kd τ/2}` and `z = (kd² - 4ks) τ²/4` this holds `E·C(z)`,
/// `E·S(z)` and `E·H(z)` where `C` is `cosh`/`cos`, `S` is `sinhc`/`sinc` and
/// `H` is `h_over`/`h_under` of `ε = √|z|`. All three are analytic in `z`
/// (`dC/dz = S/2`, `dS/dz = H/2`), which is what makes the solution and its
/// parameter derivatives continuous through critical damping.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Basis {
    pub tau: f64,
    /// `kd² - 4ks`.
    pub disc: f64,
    /// `+1` overdamped side, `-1` underdamped side.
    pub side: f64,
    pub ec: f64,
    pub es: f64,
    pub eh: f64,
}

impl Basis {
    #[inline]
    pub fn new(params: &SpringParams, s: f64, dt: f64) -> Self {
        let SpringParams { ks, kd } = *params;
        let tau = s * dt;
        let disc = params.discriminant();
        let half_decay = 0.5 * kd * tau;
        if disc >= 0.0 {
            let root = disc.sqrt();
            let eps = 0.5 * tau * root;
            // a - ε without cancellation: τ/2 (kd - √D) = 2τ ks / (kd + √D)
            let slow = if kd + root > 0.0 {
                2.0 * tau * ks / (kd + root)
            } else {
                half_decay
            };
            let (ec, es, eh) = scaled_over(eps, slow, half_decay + eps);
            Self {
                tau,
                disc,
                side: 1.0,
                ec,
                es,
                eh,
            }
        } else {
            let eps = 0.5 * tau * (-disc).sqrt();
            let decay = (-half_decay).exp();
            Self {
                tau,
                disc,
                side: -1.0,
                ec: decay * eps.cos(),
                es: decay * sinc_e(eps),
                eh: decay * h_under(eps),
            }
        }
    }

    /// `E g` and `E g'` (with `g' = dg/dτ`).
    #[inline]
    pub fn homogeneous(&self, gm: &Gammas) -> (Vec3, Vec3) {
        let eg = self.ec * gm.g1 + (self.tau * self.es) * gm.g2;
        let egdot = (0.25 * self.disc * self.tau * self.es) * gm.g1 + self.ec * gm.g2;
        (eg, egdot)
    }
}

/// Scalar responses of the tracking error `e = x - x̂`, which obeys
/// `ë + kd ė + ks e = -ẍ̂(t)`, after elapsed time `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ResponseTerms {
    /// `e(τ)` from `e = 1`, `ė = 0`.
    pub phi0: f64,
    /// `e(τ)` from `e = 0`, `ė = 1` (the impulse response).
    pub g: f64,
    /// `ė(τ)` from `e = 0`, `ė = 1`.
    pub gdot: f64,
    /// `ė(τ)` from `e = 1`, `ė = 0`; equals `-ks g`.
    pub vx: f64,
    /// `e(τ)` from rest under unit forcing.
    pub psi2: f64,
    /// `e(τ)` from rest under forcing `f(u) = u`.
    pub psi3: f64,
}

/// [`ResponseTerms`] and their partials in `ks` and `kd`.
///
/// Everything is built from `E·C`, `E·S`, `E·H`, except the two forcing
/// integrals: a Taylor series in `τ` when both `kd τ` and `ks τ²` are small,
/// the closed forms `ψ₂ = (1 - φ₀)/ks`, `ψ₃ = (τ - g - kd ψ₂)/ks` when
/// `ks τ² ≥ 1`, and a split into slow and fast exponential modes for
/// strongly overdamped springs whose slow mode barely moves within `τ`.
/// Nothing here divides a small difference by a small number.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Response {
    pub val: ResponseTerms,
    pub d_ks: ResponseTerms,
    pub d_kd: ResponseTerms,
}

/// Taylor terms of `ψ₂`, `ψ₃` (and partials) summed to round-off.
const RESPONSE_SERIES_TERMS: usize = 40;

impl Response {
    pub fn new(params: &SpringParams, tau: f64) -> Self {
        let SpringParams { ks, kd } = *params;
        let b = Basis::new(params, 1.0, tau);
        let g = tau * b.es;
        let t2 = tau * tau;
        let t3 = t2 * tau;

        let dec = [-0.5 * tau * g, -0.5 * tau * b.ec + 0.25 * kd * tau * g];
        let dg = [-0.5 * t3 * b.eh, -0.5 * tau * g + 0.25 * kd * t3 * b.eh];
        let half_kd = 0.5 * kd;
        let phi0 = b.ec + half_kd * g;
        let gdot = b.ec - half_kd * g;
        let dphi0 = [dec[0] + half_kd * dg[0], dec[1] + 0.5 * g + half_kd * dg[1]];
        let dgdot = [dec[0] - half_kd * dg[0], dec[1] - 0.5 * g - half_kd * dg[1]];
        let dvx = [-g - ks * dg[0], -ks * dg[1]];

        let (psi2, psi3, dpsi2, dpsi3) = forcing_integrals(params, &b, tau, phi0, g, dphi0, dg);

        let terms = |k: usize| ResponseTerms {
            phi0: dphi0[k],
            g: dg[k],
            gdot: dgdot[k],
            vx: dvx[k],
            psi2: dpsi2[k],
            psi3: dpsi3[k],
        };
        Self {
            val: ResponseTerms {
                phi0,
                g,
                gdot,
                vx: -ks * g,
                psi2,
                psi3,
            },
            d_ks: terms(0),
            d_kd: terms(1),
        }
    }

    /// State at `s` on `iv` (with `τ = sΔt` matching this response) starting
    /// from `state` at the beginning of the interval.
    #[inline]
    pub fn apply(&self, state: &ParticleState, iv: &CubicInterval, s: f64, dt: f64) -> ParticleState {
        let r = &self.val;
        let (e0, edot0, acc0, jerk) = tracking_error(state, iv, dt);
        ParticleState {
            x: iv.position(s) + r.phi0 * e0 + r.g * edot0 - r.psi2 * acc0 - r.psi3 * jerk,
            v: iv.velocity(s, dt) + r.vx * e0 + r.gdot * edot0 - r.g * acc0 - r.psi2 * jerk,
        }
    }
}

/// `(e, ė)` at the start of `iv` and the target's `ẍ̂(0)`, `x⃛̂`.
#[inline]
pub(crate) fn tracking_error(state: &ParticleState, iv: &CubicInterval, dt: f64) -> (Vec3, Vec3, Vec3, Vec3) {
    let dt2 = dt * dt;
    (
        state.x - iv.c,
        state.v - iv.b / dt,
        (2.0 / dt2) * iv.a,
        (6.0 / (dt2 * dt)) * iv.q,
    )
}

#[allow(clippy::too_many_arguments)]
fn forcing_integrals(
    params: &SpringParams,
    b: &Basis,
    tau: f64,
    phi0: f64,
    g: f64,
    dphi0: [f64; 2],
    dg: [f64; 2],
) -> (f64, f64, [f64; 2], [f64; 2]) {
    let SpringParams { ks, kd } = *params;
    let kt = kd * tau;
    let st = ks * tau * tau;
    if b.disc > 0.0 {
        let root = b.disc.sqrt();
        let fast = 0.5 * (kd + root);
        let slow = ks / fast;
        if root * tau > 2.0 && slow * tau <= 1.0 {
            // ψ₂ and ψ₃ as divided differences over the two decay rates of
            // k₁(λ) = τ φ₁(-λτ) and k₂(λ) = τ² φ₂(-λτ).
            let t2 = tau * tau;
            let (a1, a2, a3) = phi123(-slow * tau);
            let (b1, b2, b3) = phi123(-fast * tau);
            let psi2 = tau * (a1 - b1) / root;
            let psi3 = t2 * (a2 - b2) / root;
            let dk1 = [-t2 * (a1 - a2), -t2 * (b1 - b2)];
            let dk2 = [-t2 * tau * (a2 - 2.0 * a3), -t2 * tau * (b2 - 2.0 * b3)];
            let dslow = [1.0 / root, -slow / root];
            let dfast = [-1.0 / root, fast / root];
            let droot = [-2.0 / root, kd / root];
            let d = |dk: &[f64; 2], val: f64, j: usize| (dk[0] * dslow[j] - dk[1] * dfast[j] - val * droot[j]) / root;
            return (
                psi2,
                psi3,
                [d(&dk1, psi2, 0), d(&dk1, psi2, 1)],
                [d(&dk2, psi3, 0), d(&dk2, psi3, 1)],
            );
        }
    }
    if st >= 1.0 {
        let psi2 = (1.0 - phi0) / ks;
        let psi3 = (tau - g - kd * psi2) / ks;
        let dpsi2 = [-(dphi0[0] + psi2) / ks, -dphi0[1] / ks];
        let dpsi3 = [
            -(dg[0] + kd * dpsi2[0] + psi3) / ks,
            -(dg[1] + psi2 + kd * dpsi2[1]) / ks,
        ];
        return (psi2, psi3, dpsi2, dpsi3);
    }
    // Scaled Taylor coefficients of the impulse response: u (value), w (∂ks),
    // y (∂kd), obeying (n+2)(n+1)u₍ₙ₊₂₎ = -(kd τ (n+1) u₍ₙ₊₁₎ + ks τ² uₙ).
    let (mut u, mut w, mut y) = ([0.0, 1.0], [0.0, 0.0], [0.0, 0.0]);
    let mut sums = [0.0; 6];
    for n in 0..RESPONSE_SERIES_TERMS {
        let nf = n as f64;
        let i2 = 1.0 / (nf + 1.0);
        let i3 = i2 / (nf + 2.0);
        sums[0] += u[0] * i2;
        sums[1] += u[0] * i3;
        sums[2] += w[0] * i2;
        sums[3] += w[0] * i3;
        sums[4] += y[0] * i2;
        sums[5] += y[0] * i3;
        let den = 1.0 / ((nf + 2.0) * (nf + 1.0));
        let un = -(kt * (nf + 1.0) * u[1] + st * u[0]) * den;
        let wn = -(kt * (nf + 1.0) * w[1] + st * w[0] + u[0]) * den;
        let yn = -(kt * (nf + 1.0) * y[1] + st * y[0] + (nf + 1.0) * u[1]) * den;
        u = [u[1], un];
        w = [w[1], wn];
        y = [y[1], yn];
    }
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (
        t2 * sums[0],
        t3 * sums[1],
        [t2 * t2 * sums[2], t3 * sums[4]],
        [t3 * t2 * sums[3], t2 * t2 * sums[5]],
    )
}

/// Overdamped homogeneous part without the decay factor, for reference use.
pub fn homogeneous_over(gm: &Gammas, eps: f64, tau: f64) -> Vec3 {
    cosh_e(eps) * gm.g1 + (tau * sinhc(eps)) * gm.g2
}

/// Underdamped homogeneous part without the decay factor.
pub fn homogeneous_under(gm: &Gammas, eps: f64, tau: f64) -> Vec3 {
    eps.cos() * gm.g1 + (tau * sinc_e(eps)) * gm.g2
}

/// Critically damped homogeneous part `γ₁ + γ₂ τ`.
pub fn homogeneous_critical(gm: &Gammas, tau: f64) -> Vec3 {
    gm.g1 + tau * gm.g2
}

#[inline]
fn combine(basis: &Basis, gm: &Gammas, kd: f64, p: Vec3, pdot: Vec3) -> ParticleState {
    let (eg, egdot) = basis.homogeneous(gm);
    ParticleState {
        x: eg + p,
        v: egdot - (0.5 * kd) * eg + pdot,
    }
}

/// State at `tⁿ + sΔt` given the interval's `γ₁`, `γ₂`.
pub fn eval_state(
    gm: &Gammas,
    iv: &CubicInterval,
    params: &SpringParams,
    s: f64,
    dt: f64,
) -> ParticleState {
    let basis = Basis::new(params, s, dt);
    let (p, pdot) = particular(iv, params, s, dt);
    combine(&basis, gm, params.kd, p, pdot)
}

/// Default initial state: on the first sample, moving with the target.
pub fn initial_state(track: &SampleTrack) -> ParticleState {
    ParticleState {
        x: track.positions()[0],
        v: track.interval_unchecked(0).velocity(0.0, track.dt()),
    }
}

/// Advances whole intervals for fixed parameters and `Δt`.
///
/// The end-of-interval responses depend only on `(ks, kd, Δt)`, so they are
/// computed once and reused for every interval.
#[derive(Debug, Clone, Copy)]
pub struct Stepper {
    params: SpringParams,
    dt: f64,
    end: Response,
}

impl Stepper {
    pub fn new(params: SpringParams, dt: f64) -> Self {
        Self {
            params,
            dt,
            end: Response::new(&params, dt),
        }
    }

    #[inline]
    pub fn params(&self) -> &SpringParams {
        &self.params
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// State at the end of `iv` starting from `state` at its beginning.
    #[inline]
    pub fn advance(&self, state: &ParticleState, iv: &CubicInterval) -> ParticleState {
        self.end.apply(state, iv, 1.0, self.dt)
    }
}

/// State at `tⁿ + sΔt` starting from `state` at `tⁿ`.
///
/// Same solution as [`eval_state`] but evaluated through the tracking error,
/// which keeps full precision when `ks Δt²` is small and the particular
/// solution's `1/ks` terms are large.
pub fn propagate(
    state: &ParticleState,
    iv: &CubicInterval,
    params: &SpringParams,
    s: f64,
    dt: f64,
) -> ParticleState {
    Response::new(params, s * dt).apply(state, iv, s, dt)
}

/// States at every sample time, starting from `init` (or
/// [`initial_state`]) at the first sample.
pub fn step_sequence(
    track: &SampleTrack,
    params: &SpringParams,
    init: Option<ParticleState>,
) -> Vec<ParticleState> {
    let stepper = Stepper::new(*params, track.dt());
    let mut state = init.unwrap_or_else(|| initial_state(track));
    let mut out = Vec::with_capacity(track.len());
    out.push(state);
    for iv in track.intervals() {
        state = stepper.advance(&state, &iv);
        out.push(state);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(ks: f64, kd: f64) -> SpringParams {
        SpringParams::new(ks, kd).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SpringParams::new(0.0, 1.0).is_err());
        assert!(SpringParams::new(1.0, -1.0).is_err());
        assert!(SpringParams::new(f64::INFINITY, 1.0).is_err());
        assert!(SpringParams::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn classification() {
        assert_eq!(p(1.0, 3.0).regime().kind, RegimeKind::Overdamped);
        assert_eq!(p(1.0, 1.0).regime().kind, RegimeKind::Underdamped);
        assert_eq!(p(1.0, 2.0).regime().kind, RegimeKind::Critical);
        assert_eq!(p(1.0, 3.0).regime().omega2, 5.0);
        let near = p(100.0, (400.0f64 * (1.0 + 1e-12)).sqrt());
        assert_eq!(near.regime().kind, RegimeKind::Critical);
    }

    #[test]
    fn particular_solution_examples() {
        let c = Vec3::new(1.0, 2.0, 3.0);
        let (pp, pd) = particular(&CubicInterval::constant(c), &p(4.0, 2.0), 0.3, 0.1);
        assert_eq!(pp, c);
        assert_eq!(pd, Vec3::zeros());

        let iv = CubicInterval {
            q: Vec3::new(1.0, 0.0, 0.0),
            a: Vec3::zeros(),
            b: Vec3::zeros(),
            c: Vec3::zeros(),
        };
        // s³ - 6s/4 + 12/16 at s = 1/2
        let (pp, pd) = particular(&iv, &p(4.0, 2.0), 0.5, 1.0);
        assert!((pp.x - 0.125).abs() < 1e-15);
        assert!((pd.x - (0.75 - 1.5)).abs() < 1e-15);
    }

    #[test]
    fn particular_solves_the_ode() {
        let iv = CubicInterval {
            q: Vec3::new(0.3, -1.2, 0.7),
            a: Vec3::new(-0.4, 0.9, 0.1),
            b: Vec3::new(0.2, 0.5, -0.6),
            c: Vec3::new(1.0, 0.0, -2.0),
        };
        let prm = p(7.0, 1.3);
        let dt = 0.4;
        let h = 1e-4;
        for &s in &[0.2, 0.5, 0.8] {
            let (p0, v0) = particular(&iv, &prm, s, dt);
            let (pm, _) = particular(&iv, &prm, s - h, dt);
            let (pp, _) = particular(&iv, &prm, s + h, dt);
            let acc = (pp - 2.0 * p0 + pm) / (h * dt * h * dt);
            let vel_fd = (pp - pm) / (2.0 * h * dt);
            assert!((vel_fd - v0).norm() < 1e-7);
            let residual = acc + prm.kd * v0 + prm.ks * p0
                - prm.ks * iv.position(s)
                - prm.kd * iv.velocity(s, dt);
            assert!(residual.norm() < 1e-5, "{residual}");
        }
    }

    #[test]
    fn gamma_examples() {
        let c = Vec3::new(0.5, 0.5, 0.5);
        let iv = CubicInterval::constant(c);
        let g = gammas(&ParticleState::at_rest(c), &iv, &p(3.0, 1.0), 0.1);
        assert_eq!(g.g1, Vec3::zeros());
        assert_eq!(g.g2, Vec3::zeros());

        let iv0 = CubicInterval::constant(Vec3::zeros());
        let g = gammas(
            &ParticleState::at_rest(Vec3::new(1.0, 0.0, 0.0)),
            &iv0,
            &p(1.0, 2.0),
            1.0,
        );
        assert_eq!(g.g1, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(g.g2, Vec3::new(1.0, 0.0, 0.0));

        let iv = CubicInterval {
            q: Vec3::new(0.1, 0.2, 0.3),
            a: Vec3::new(0.3, 0.1, -0.2),
            b: Vec3::new(1.0, 0.0, 0.0),
            c: Vec3::zeros(),
        };
        let prm = p(5.0, 0.0);
        let (p0, pd0) = particular(&iv, &prm, 0.0, 0.5);
        let u = Vec3::new(0.1, -0.2, 0.3);
        let g = gammas(&ParticleState::new(p0 + u, pd0), &iv, &prm, 0.5);
        assert!((g.g1 - u).norm() < 1e-15);
        assert!(g.g2.norm() < 1e-15);
    }

    #[test]
    fn eval_state_at_zero_returns_initial_state() {
        let iv = CubicInterval {
            q: Vec3::new(0.1, -0.3, 0.2),
            a: Vec3::new(0.3, 0.1, -0.2),
            b: Vec3::new(1.0, 0.4, 0.0),
            c: Vec3::new(0.0, 1.0, 2.0),
        };
        let init = ParticleState::new(Vec3::new(0.3, 0.2, 0.1), Vec3::new(-1.0, 0.5, 2.0));
        for prm in [p(10.0, 9.0), p(10.0, 1.0), p(9.0, 6.0)] {
            let gm = gammas(&init, &iv, &prm, 0.1);
            let st = eval_state(&gm, &iv, &prm, 0.0, 0.1);
            assert!((st.x - init.x).norm() < 1e-13, "{prm:?} {}", (st.x - init.x).norm());
            assert!((st.v - init.v).norm() < 1e-12, "{prm:?} {}", (st.v - init.v).norm());
        }
    }

    #[test]
    fn zero_gammas_track_particular_solution() {
        let iv = CubicInterval {
            q: Vec3::new(0.1, -0.3, 0.2),
            a: Vec3::new(0.3, 0.1, -0.2),
            b: Vec3::new(1.0, 0.4, 0.0),
            c: Vec3::new(0.0, 1.0, 2.0),
        };
        let zero = Gammas {
            g1: Vec3::zeros(),
            g2: Vec3::zeros(),
        };
        for prm in [p(10.0, 9.0), p(10.0, 1.0), p(9.0, 6.0)] {
            for &s in &[0.0, 0.25, 1.0] {
                let st = eval_state(&zero, &iv, &prm, s, 0.2);
                let (pp, pd) = particular(&iv, &prm, s, 0.2);
                assert_eq!(st.x, pp);
                assert_eq!(st.v, pd);
            }
        }
    }

    #[test]
    fn undamped_half_period() {
        let iv = CubicInterval::constant(Vec3::zeros());
        let prm = p(1.0, 0.0);
        let init = ParticleState::at_rest(Vec3::new(1.0, 0.0, 0.0));
        let gm = gammas(&init, &iv, &prm, PI);
        let st = eval_state(&gm, &iv, &prm, 1.0, PI);
        assert!((st.x - Vec3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(st.v.norm() < 1e-15);
    }

    #[test]
    fn regime_branches_meet_at_critical() {
        let tau = 0.7;
        let gm = Gammas {
            g1: Vec3::new(1.0, -2.0, 0.5),
            g2: Vec3::new(0.3, 0.1, -4.0),
        };
        let c = homogeneous_critical(&gm, tau);
        assert_eq!(homogeneous_over(&gm, 0.0, tau), c);
        assert_eq!(homogeneous_under(&gm, 0.0, tau), c);
        assert!((homogeneous_over(&gm, 1e-7, tau) - c).norm() < 1e-13);
        assert!((homogeneous_under(&gm, 1e-7, tau) - c).norm() < 1e-13);
    }

    #[test]
    fn basis_matches_unscaled_formulas() {
        let gm = Gammas {
            g1: Vec3::new(1.0, -2.0, 0.5),
            g2: Vec3::new(0.3, 0.1, -4.0),
        };
        let dt = 0.3;
        for prm in [p(10.0, 9.0), p(10.0, 1.0), p(4.0, 4.0)] {
            let b = Basis::new(&prm, 1.0, dt);
            let (eg, _) = b.homogeneous(&gm);
            let decay = (-0.5 * prm.kd * dt).exp();
            let eps = 0.5 * dt * prm.discriminant().abs().sqrt();
            let g = match prm.regime().kind {
                RegimeKind::Overdamped => homogeneous_over(&gm, eps, dt),
                RegimeKind::Underdamped => homogeneous_under(&gm, eps, dt),
                RegimeKind::Critical => homogeneous_critical(&gm, dt),
            };
            assert!((eg - decay * g).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_track_stays_put() {
        let c = Vec3::new(1.0, 2.0, 3.0);
        let track = SampleTrack::new(vec![c; 6], 1.0 / 30.0).unwrap();
        for st in step_sequence(&track, &p(50.0, 3.0), None) {
            assert_eq!(st.x, c);
            assert_eq!(st.v, Vec3::zeros());
        }
    }

    #[test]
    fn extreme_steps_stay_finite() {
        let track = SampleTrack::from_scalars(&[0.0, 1.0, -1.0, 2.0, 0.0], 10.0).unwrap();
        for prm in [p(1e6, 1e4), p(1e-3, 1e4), p(1e6, 0.0), p(1e-3, 0.0), p(1e6, 2e3)] {
            for st in step_sequence(&track, &prm, None) {
                assert!(st.x.iter().chain(st.v.iter()).all(|v| v.is_finite()), "{prm:?}");
            }
        }
    }

    fn busy_iv() -> CubicInterval {
        CubicInterval {
            q: Vec3::new(0.1, -0.3, 0.2),
            a: Vec3::new(0.3, 0.1, -0.2),
            b: Vec3::new(1.0, 0.4, 0.0),
            c: Vec3::new(0.0, 1.0, 2.0),
        }
    }

    // (params, dt) hitting the split-mode, closed-form and series paths.
    fn branch_cases() -> [(SpringParams, f64); 5] {
        [
            (p(1.0, 100.0), 0.5),
            (p(400.0, 1.0), 0.2),
            (p(50.0, 60.0), 0.3),
            (p(2.0, 1.0), 0.1),
            (p(4.0, 4.0), 0.2),
        ]
    }

    #[test]
    fn propagate_matches_eval_state() {
        let iv = busy_iv();
        let init = ParticleState::new(Vec3::new(0.3, 0.2, 0.1), Vec3::new(-1.0, 0.5, 2.0));
        for (prm, dt) in branch_cases() {
            let gm = gammas(&init, &iv, &prm, dt);
            for &s in &[0.0, 0.4, 1.0] {
                let a = propagate(&init, &iv, &prm, s, dt);
                let b = eval_state(&gm, &iv, &prm, s, dt);
                assert!((a.x - b.x).norm() < 1e-11 * (1.0 + b.x.norm()), "{prm:?} {s}");
                assert!((a.v - b.v).norm() < 1e-10 * (1.0 + b.v.norm()), "{prm:?} {s}");
            }
        }
    }

    #[test]
    fn response_partials_match_finite_differences() {
        let fields = |r: &ResponseTerms| [r.phi0, r.g, r.gdot, r.vx, r.psi2, r.psi3];
        for (prm, tau) in branch_cases() {
            let r = Response::new(&prm, tau);
            for (k, d) in [(0, &r.d_ks), (1, &r.d_kd)] {
                let base = if k == 0 { prm.ks } else { prm.kd };
                let h = 1e-6 * base;
                let shifted = |sign: f64| {
                    let mut q = prm;
                    if k == 0 {
                        q.ks += sign * h;
                    } else {
                        q.kd += sign * h;
                    }
                    fields(&Response::new(&q, tau).val)
                };
                let (hi, lo) = (shifted(1.0), shifted(-1.0));
                for (j, &an) in fields(d).iter().enumerate() {
                    let fd = (hi[j] - lo[j]) / (2.0 * h);
                    let scale = an.abs().max(fd.abs()).max(1e-9);
                    assert!((an - fd).abs() / scale < 1e-6, "{prm:?} k{k} field {j}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn response_continuous_across_switches() {
        let fields = |r: &Response| {
            let mut v = Vec::new();
            for t in [&r.val, &r.d_ks, &r.d_kd] {
                v.extend([t.phi0, t.g, t.gdot, t.vx, t.psi2, t.psi3]);
            }
            v
        };
        let tau: f64 = 0.5;
        let eps = 1e-12;
        // ks τ² = 1, series against closed form.
        let ks = 1.0 / (tau * tau);
        // √D τ = 2 with the slow mode well inside one step.
        let kd_root = {
            let root = 2.0 / tau;
            let ks = 0.5;
            (root * root + 4.0 * ks).sqrt()
        };
        // slow τ = 1 with a fast mode.
        let kd_slow = {
            let slow = 1.0 / tau;
            let ks = 40.0;
            ks / slow + slow
        };
        let switches = [
            (ks, 0.5, true),
            (0.5, kd_root, false),
            (40.0, kd_slow, false),
        ];
        for (ks, kd, vary_ks) in switches {
            let at = |f: f64| {
                let q = if vary_ks { p(ks * f, kd) } else { p(ks, kd * f) };
                fields(&Response::new(&q, tau))
            };
            let (lo, hi) = (at(1.0 - eps), at(1.0 + eps));
            for (a, b) in lo.iter().zip(&hi) {
                assert!((a - b).abs() <= 1e-9 * (a.abs().max(b.abs()) + 1e-6), "ks {ks} kd {kd}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn soft_spring_keeps_precision() {
        // ks Δt² ~ 1e-8: the particular solution is huge, the tracking error is not.
        let track = SampleTrack::from_scalars(&[0.0, 0.01, 0.03, 0.02, 0.0], 1.0 / 60.0).unwrap();
        let prm = p(1e-4, 0.5);
        let states = step_sequence(&track, &prm, None);
        let mut x = states[0];
        for (n, iv) in track.intervals().enumerate() {
            let h = 1.0 / 4000.0;
            for k in 0..4000 {
                // midpoint on the raw ODE as an independent check
                let f = |st: &ParticleState, s: f64| {
                    prm.ks * (iv.position(s) - st.x) + prm.kd * (iv.velocity(s, track.dt()) - st.v)
                };
                let s = k as f64 * h;
                let dt = h * track.dt();
                let a = f(&x, s);
                let mid = ParticleState::new(x.x + 0.5 * dt * x.v, x.v + 0.5 * dt * a);
                let am = f(&mid, s + 0.5 * h);
                x = ParticleState::new(x.x + dt * mid.v, x.v + dt * am);
            }
            assert!((states[n + 1].x - x.x).norm() < 1e-9, "{n}");
        }
    }
}
