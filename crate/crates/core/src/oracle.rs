//! Backward-Euler integration of the spring ODE.
//!
//! Independent of the closed-form path: it only shares the cubic target
//! construction. Used to cross-check the analytic solver and to synthesise
//! "simulated" ground truth, optionally corrupted by gross outlier frames.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::fitting::GroundTruthTrack;
use crate::kinematics::SampleTrack;
use crate::spring::{initial_state, ParticleState, SpringParams};
use crate::Vec3;

/// One fully implicit step of length `h` toward the end-of-step target.
///
/// Solves `x' = x + h v'`, `v' = v + h (ks (x̂' - x') + kd (ẋ̂' - v'))`
/// per axis in closed form.
#[inline]
pub fn be_step(
    state: &ParticleState,
    target_pos: &Vec3,
    target_vel: &Vec3,
    params: &SpringParams,
    h: f64,
) -> ParticleState {
    let SpringParams { ks, kd } = *params;
    let denom = 1.0 + h * kd + h * h * ks;
    let v = (state.v + (h * ks) * (target_pos - state.x) + (h * kd) * target_vel) / denom;
    ParticleState {
        x: state.x + h * v,
        v,
    }
}

/// Integrates over every interval with `substeps` uniform steps each and
/// returns the states at the sample times.
pub fn be_simulate(
    track: &SampleTrack,
    params: &SpringParams,
    init: Option<ParticleState>,
    substeps: usize,
) -> Result<Vec<ParticleState>> {
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be at least 1".into()));
    }
    let dt = track.dt();
    let h = dt / substeps as f64;
    let mut state = init.unwrap_or_else(|| initial_state(track));
    let mut out = Vec::with_capacity(track.len());
    out.push(state);
    for iv in track.intervals() {
        for j in 1..=substeps {
            let s = j as f64 / substeps as f64;
            state = be_step(&state, &iv.position(s), &iv.velocity(s, dt), params, h);
        }
        out.push(state);
    }
    Ok(out)
}

/// Outlier-frame corruption applied on top of simulated truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeModel {
    /// Fraction of frames displaced, in `[0, 1)`.
    pub fraction: f64,
    /// Length of each displacement.
    pub magnitude: f64,
    pub seed: u64,
}

impl SpikeModel {
    pub fn none() -> Self {
        Self {
            fraction: 0.0,
            magnitude: 0.0,
            seed: 0,
        }
    }
}

/// Backward-Euler truth with `⌊fraction·N⌋` randomly chosen frames displaced
/// by random-direction vectors of length `magnitude`.
///
/// Returns the truth and the sorted indices of the displaced frames.
pub fn synth_truth(
    track: &SampleTrack,
    params: &SpringParams,
    init: Option<ParticleState>,
    substeps: usize,
    spikes: &SpikeModel,
) -> Result<(GroundTruthTrack, Vec<usize>)> {
    if !(0.0..1.0).contains(&spikes.fraction) {
        return Err(Error::InvalidArgument(format!(
            "spike fraction must lie in [0, 1), got {}",
            spikes.fraction
        )));
    }
    let states = be_simulate(track, params, init, substeps)?;
    let mut positions: Vec<Vec3> = states.iter().map(|s| s.x).collect();
    let count = (spikes.fraction * positions.len() as f64).floor() as usize;
    let mut frames = Vec::new();
    if count > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spikes.seed);
        frames = sample(&mut rng, positions.len(), count).into_vec();
        frames.sort_unstable();
        for &n in &frames {
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            positions[n] += spikes.magnitude * Vec3::from(dir);
        }
    }
    Ok((GroundTruthTrack::new(positions), frames))
}
