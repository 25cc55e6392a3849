//! Frame-major stepping of many particles, as a runtime would drive it.
//!
//! Every frame advances all particles by one interval. The interval's cubic
//! needs the samples at `n - 1 ..= n + 2`; missing neighbours at either end
//! of the sequence fall back to one-sided tangents exactly as
//! [`SampleTrack`](crate::SampleTrack) does, so a batch run reproduces
//! per-particle [`step_sequence`](crate::spring::step_sequence) bit for bit.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::io::{TrajectoryKind, TrajectorySet};
use crate::kinematics::{endpoint_tangent, CubicInterval};
use crate::spring::{ParticleState, SpringParams, Stepper};
use crate::Vec3;

/// Particle count of the reference character mesh used for throughput figures.
pub const REFERENCE_PARTICLES: usize = 13_575;

#[derive(Debug, Clone)]
pub struct BatchStepper {
    steppers: Vec<Stepper>,
    states: Vec<ParticleState>,
}

impl BatchStepper {
    pub fn new(params: &[SpringParams], dt: f64, init: Vec<ParticleState>) -> Result<Self> {
        if params.len() != init.len() {
            return Err(Error::Misaligned(format!(
                "{} parameter sets for {} particles",
                params.len(),
                init.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            steppers: params.iter().map(|p| Stepper::new(*p, dt)).collect(),
            states: init,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[ParticleState] {
        &self.states
    }

    /// Advances every particle across `[x0, x1]`. `prev` and `next` are the
    /// samples just outside the interval, when they exist.
    pub fn step(&mut self, prev: Option<&[Vec3]>, x0: &[Vec3], x1: &[Vec3], next: Option<&[Vec3]>) {
        let v = self.states.len();
        assert!(x0.len() == v && x1.len() == v, "frame width must match particle count");
        for i in 0..v {
            let d0 = endpoint_tangent(prev.map(|p| &p[i]), &x0[i], Some(&x1[i]));
            let d1 = endpoint_tangent(Some(&x0[i]), &x1[i], next.map(|p| &p[i]));
            let iv = CubicInterval::hermite(&x0[i], &x1[i], &d0, &d1);
            self.states[i] = self.steppers[i].advance(&self.states[i], &iv);
        }
    }
}

fn frame(set: &TrajectorySet, n: usize) -> Vec<Vec3> {
    (0..set.particles()).map(|i| set.position(n, i)).collect()
}

/// Default starting state for every particle of `target`: on the first
/// sample, moving with the target.
pub fn initial_states(target: &TrajectorySet) -> Result<Vec<ParticleState>> {
    (0..target.particles())
        .map(|i| Ok(crate::spring::initial_state(&target.track(i)?)))
        .collect()
}

/// Simulates all particles of `target` with per-particle `params`.
pub fn simulate(target: &TrajectorySet, params: &[SpringParams]) -> Result<TrajectorySet> {
    if target.frames() < 2 {
        return Err(Error::InvalidTrack(format!(
            "need at least 2 frames, got {}",
            target.frames()
        )));
    }
    let mut batch = BatchStepper::new(params, target.dt(), initial_states(target)?)?;
    let n_frames = target.frames();
    let mut out: Vec<f64> = Vec::with_capacity(n_frames * target.particles() * 3);
    let push = |out: &mut Vec<f64>, states: &[ParticleState]| {
        for s in states {
            out.extend_from_slice(s.x.as_slice());
        }
    };
    push(&mut out, batch.states());
    let frames: Vec<Vec<Vec3>> = (0..n_frames).map(|n| frame(target, n)).collect();
    for n in 0..n_frames - 1 {
        let prev = n.checked_sub(1).map(|k| frames[k].as_slice());
        let next = frames.get(n + 2).map(Vec::as_slice);
        batch.step(prev, &frames[n], &frames[n + 1], next);
        push(&mut out, batch.states());
    }
    TrajectorySet::new(n_frames, target.particles(), target.dt(), TrajectoryKind::Output, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub particles: usize,
    pub frames: usize,
    pub seconds: f64,
    pub particle_steps_per_second: f64,
    /// Frames per second when stepping `particles` particles each frame.
    pub fps: f64,
}

/// Times frame-major stepping of `particles` particles over `frames` frames
/// of a synthetic moving target with varied parameters.
pub fn bench(particles: usize, frames: usize, dt: f64) -> Result<BenchReport> {
    if particles == 0 || frames == 0 {
        return Err(Error::InvalidArgument("bench needs at least one particle and one frame".into()));
    }
    let total = frames + 3;
    let sample = |n: usize, i: usize| {
        let t = n as f64 * dt;
        let ph = i as f64 * 0.013;
        Vec3::new((3.0 * t + ph).sin(), (2.0 * t - ph).cos(), 0.1 * (5.0 * t).sin())
    };
    let window: Vec<Vec<Vec3>> = (0..total)
        .map(|n| (0..particles).map(|i| sample(n, i)).collect())
        .collect();
    let params: Vec<SpringParams> = (0..particles)
        .map(|i| SpringParams {
            ks: 20.0 + (i % 97) as f64 * 5.0,
            kd: 0.5 + (i % 13) as f64 * 2.0,
        })
        .collect();
    let init = window[1].iter().map(|x| ParticleState::at_rest(*x)).collect();
    let mut batch = BatchStepper::new(&params, dt, init)?;

    let start = Instant::now();
    for n in 1..=frames {
        batch.step(Some(&window[n - 1]), &window[n], &window[n + 1], Some(&window[n + 2]));
    }
    let seconds = start.elapsed().as_secs_f64().max(1e-12);
    std::hint::black_box(batch.states());
    let rate = (particles * frames) as f64 / seconds;
    Ok(BenchReport {
        particles,
        frames,
        seconds,
        particle_steps_per_second: rate,
        fps: frames as f64 / seconds,
    })
}
