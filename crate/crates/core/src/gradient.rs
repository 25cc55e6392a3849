//! Exact partial derivatives of the simulated trajectory with respect to
//! `ks` and `kd`.
//!
//! Sensitivities are carried forward with the state: the partials of `xⁿ`
//! and `ẋⁿ` enter the next interval through `∂γ₁/∂k` and `∂γ₂/∂k`, and the
//! dependence of the homogeneous basis on the parameters is routed through
//! `(1/ε)∂g/∂ε · ε∂ε/∂k`, both factors of which stay finite as `ε → 0`.
//!
//! [`grad_eval`] and [`dgammas`] follow that construction directly. The
//! steppers differentiate the tracking-error form used by
//! [`crate::spring::Stepper`] instead; the two agree wherever the first is
//! well conditioned.

use crate::error::{Error, Result};
use crate::kinematics::{CubicInterval, SampleTrack};
use crate::spring::{
    initial_state, tracking_error, Basis, DampingRegime, Gammas, ParticleState,
    RegimeKind, Response, ResponseTerms, SpringParams,
};
use crate::Vec3;

/// `∂x/∂k` and `∂ẋ/∂k` for both parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensitivityState {
    pub dx_dks: Vec3,
    pub dv_dks: Vec3,
    pub dx_dkd: Vec3,
    pub dv_dkd: Vec3,
}

impl SensitivityState {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// Parameter partials of the particular solution and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticularSensitivity {
    pub dp_dks: Vec3,
    pub dp_dkd: Vec3,
    pub dpdot_dks: Vec3,
    pub dpdot_dkd: Vec3,
}

#[inline]
pub fn dparticular(
    iv: &CubicInterval,
    params: &SpringParams,
    s: f64,
    dt: f64,
) -> ParticularSensitivity {
    let SpringParams { ks, kd } = *params;
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let ks2 = ks * ks;
    let cubic = (6.0 / (ks2 * dt3)) * iv.q;
    ParticularSensitivity {
        dp_dks: (6.0 * s * iv.q + 2.0 * iv.a) / (ks2 * dt2) - (12.0 * kd / (ks2 * ks * dt3)) * iv.q,
        dp_dkd: cubic,
        dpdot_dks: cubic,
        dpdot_dkd: Vec3::zeros(),
    }
}

/// `(ε ∂ε/∂ks, ε ∂ε/∂kd)` at `τ = sΔt`.
///
/// Overdamped: `(-τ²/2, +τ² kd/4)`; underdamped: `(+τ²/2, -τ² kd/4)`. There
/// is no `ε` to differentiate on the critical manifold itself, so that regime
/// is rejected; callers take the limit from either side.
pub fn epsilon_products(
    params: &SpringParams,
    regime: &DampingRegime,
    s: f64,
    dt: f64,
) -> Result<(f64, f64)> {
    let side = match regime.kind {
        RegimeKind::Overdamped => 1.0,
        RegimeKind::Underdamped => -1.0,
        RegimeKind::Critical => {
            return Err(Error::InvalidArgument(
                "epsilon products are undefined at critical damping; use the one-sided limit"
                    .into(),
            ))
        }
    };
    Ok(side_epsilon_products(side, params.kd, s * dt))
}

#[inline]
fn side_epsilon_products(side: f64, kd: f64, tau: f64) -> (f64, f64) {
    let t2 = tau * tau;
    (-side * 0.5 * t2, side * 0.25 * t2 * kd)
}

/// `∂γ₁/∂k` and `∂γ₂/∂k` for both parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSensitivity {
    pub dg1_dks: Vec3,
    pub dg1_dkd: Vec3,
    pub dg2_dks: Vec3,
    pub dg2_dkd: Vec3,
}

/// Partials of the interval's `γ₁`, `γ₂` given the sensitivities of the
/// incoming state.
#[inline]
pub fn dgammas(
    incoming: &SensitivityState,
    gm: &Gammas,
    iv: &CubicInterval,
    params: &SpringParams,
    dt: f64,
) -> GammaSensitivity {
    let dp0 = dparticular(iv, params, 0.0, dt);
    let half_kd = 0.5 * params.kd;
    let dg1_dks = incoming.dx_dks - dp0.dp_dks;
    let dg1_dkd = incoming.dx_dkd - dp0.dp_dkd;
    GammaSensitivity {
        dg1_dks,
        dg1_dkd,
        dg2_dks: incoming.dv_dks + half_kd * dg1_dks - dp0.dpdot_dks,
        dg2_dkd: incoming.dv_dkd + half_kd * dg1_dkd - dp0.dpdot_dkd + 0.5 * gm.g1,
    }
}

#[inline]
fn grad_with_basis(
    b: &Basis,
    gm: &Gammas,
    dg: &GammaSensitivity,
    dpart: &ParticularSensitivity,
    kd: f64,
) -> SensitivityState {
    let tau = b.tau;
    let (eg, egdot) = b.homogeneous(gm);

    // E·(1/ε)∂g/∂ε and the ε-products; on the underdamped side both flip sign.
    let eg_eps = b.side * (b.es * gm.g1 + (tau * b.eh) * gm.g2);
    let (eps_ks, eps_kd) = side_epsilon_products(b.side, kd, tau);

    // E·∂g/∂k
    let lin_g = |d1: &Vec3, d2: &Vec3| b.ec * d1 + (tau * b.es) * d2;
    let eg_ks = lin_g(&dg.dg1_dks, &dg.dg2_dks) + eps_ks * eg_eps;
    let eg_kd = lin_g(&dg.dg1_dkd, &dg.dg2_dkd) + eps_kd * eg_eps;

    // E·∂g'/∂k with g' = γ₁ (Dτ/4) S + γ₂ C, D = kd² - 4ks.
    let quarter_dt = 0.25 * b.disc * tau;
    let lin_gdot = |d1: &Vec3, d2: &Vec3| (quarter_dt * b.es) * d1 + b.ec * d2;
    let through_disc = (0.25 * tau * b.es) * gm.g1
        + (0.125 * tau * tau) * ((quarter_dt * b.eh) * gm.g1 + b.es * gm.g2);
    let egdot_ks = lin_gdot(&dg.dg1_dks, &dg.dg2_dks) - 4.0 * through_disc;
    let egdot_kd = lin_gdot(&dg.dg1_dkd, &dg.dg2_dkd) + (2.0 * kd) * through_disc;

    let half_kd = 0.5 * kd;
    SensitivityState {
        dx_dks: eg_ks + dpart.dp_dks,
        dx_dkd: eg_kd - (0.5 * tau) * eg + dpart.dp_dkd,
        dv_dks: egdot_ks - half_kd * eg_ks + dpart.dpdot_dks,
        dv_dkd: egdot_kd - half_kd * eg_kd - 0.5 * eg - (0.5 * tau) * (egdot - half_kd * eg)
            + dpart.dpdot_dkd,
    }
}

/// Partials of position and velocity at `tⁿ + sΔt`.
pub fn grad_eval(
    gm: &Gammas,
    dg: &GammaSensitivity,
    iv: &CubicInterval,
    params: &SpringParams,
    s: f64,
    dt: f64,
) -> SensitivityState {
    let b = Basis::new(params, s, dt);
    let dpart = dparticular(iv, params, s, dt);
    grad_with_basis(&b, gm, dg, &dpart, params.kd)
}

/// Advances state and sensitivities together over whole intervals.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityStepper {
    dt: f64,
    end: Response,
}

impl SensitivityStepper {
    pub fn new(params: SpringParams, dt: f64) -> Self {
        Self {
            dt,
            end: Response::new(&params, dt),
        }
    }

    #[inline]
    pub fn advance(
        &self,
        state: &ParticleState,
        sens: &SensitivityState,
        iv: &CubicInterval,
    ) -> (ParticleState, SensitivityState) {
        advance_with(&self.end, state, sens, iv, 1.0, self.dt)
    }
}

#[inline]
fn advance_with(
    r: &Response,
    state: &ParticleState,
    sens: &SensitivityState,
    iv: &CubicInterval,
    s: f64,
    dt: f64,
) -> (ParticleState, SensitivityState) {
    let (e0, edot0, acc0, jerk) = tracking_error(state, iv, dt);
    let v = &r.val;
    // The target does not depend on the parameters, so ∂x/∂k = ∂e/∂k.
    let chain = |d: &ResponseTerms, dx: &Vec3, dv: &Vec3| {
        (
            v.phi0 * dx + v.g * dv + d.phi0 * e0 + d.g * edot0 - d.psi2 * acc0 - d.psi3 * jerk,
            v.vx * dx + v.gdot * dv + d.vx * e0 + d.gdot * edot0 - d.g * acc0 - d.psi2 * jerk,
        )
    };
    let (dx_dks, dv_dks) = chain(&r.d_ks, &sens.dx_dks, &sens.dv_dks);
    let (dx_dkd, dv_dkd) = chain(&r.d_kd, &sens.dx_dkd, &sens.dv_dkd);
    (
        r.apply(state, iv, s, dt),
        SensitivityState {
            dx_dks,
            dv_dks,
            dx_dkd,
            dv_dkd,
        },
    )
}

/// State and sensitivities at `tⁿ + sΔt` from their values at `tⁿ`.
///
/// Agrees with [`grad_eval`] but stays accurate when `ks Δt²` is small.
pub fn propagate_sensitivity(
    state: &ParticleState,
    sens: &SensitivityState,
    iv: &CubicInterval,
    params: &SpringParams,
    s: f64,
    dt: f64,
) -> (ParticleState, SensitivityState) {
    advance_with(&Response::new(params, s * dt), state, sens, iv, s, dt)
}

/// [`crate::spring::step_sequence`] with sensitivities at every sample.
pub fn propagate_sequence(
    track: &SampleTrack,
    params: &SpringParams,
    init: Option<ParticleState>,
) -> (Vec<ParticleState>, Vec<SensitivityState>) {
    let stepper = SensitivityStepper::new(*params, track.dt());
    let mut state = init.unwrap_or_else(|| initial_state(track));
    let mut sens = SensitivityState::zero();
    let mut states = Vec::with_capacity(track.len());
    let mut sensitivities = Vec::with_capacity(track.len());
    states.push(state);
    sensitivities.push(sens);
    for iv in track.intervals() {
        (state, sens) = stepper.advance(&state, &sens, &iv);
        states.push(state);
        sensitivities.push(sens);
    }
    (states, sensitivities)
}
