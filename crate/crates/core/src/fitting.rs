//! Per-particle learning of `(ks, kd)` from ground-truth trajectories.
//!
//! The loss for one particle is the sum over (unmasked) sample frames of the
//! squared distance between the simulated and ground-truth positions, summed
//! over all of the particle's sequences. It is minimised by gradient descent
//! from a genetic-algorithm initial guess, optionally followed by a refit that
//! ignores the highest-loss frames.
//!
//! Particles are independent: nothing here reads another particle's data,
//! and every fit of a given input with a given seed is bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradient::{SensitivityState, SensitivityStepper};
use crate::kinematics::SampleTrack;
use crate::spring::{initial_state, DampingRegime, SpringParams, Stepper};
use crate::Vec3;

/// Offset `κ` in the `ln(kd + κ)` coordinate.
pub const KD_LOG_OFFSET: f64 = 1e-6;

const MAX_HALVINGS: usize = 30;
const ARMIJO: f64 = 1e-4;
/// Longest accepted move in optimisation coordinates per iteration.
const MAX_MOVE: f64 = 2.0;
const STALL_WINDOW: usize = 10;
const STALL_TOLERANCE: f64 = 1e-8;

/// Ground-truth positions aligned with a target track's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    positions: Vec<Vec3>,
}

impl GroundTruthTrack {
    pub fn new(positions: Vec<Vec3>) -> Self {
        Self { positions }
    }

    #[inline]
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

impl From<&SampleTrack> for GroundTruthTrack {
    fn from(track: &SampleTrack) -> Self {
        Self::new(track.positions().to_vec())
    }
}

/// Which frames contribute to the loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMask(Vec<bool>);

impl FrameMask {
    pub fn all(frames: usize) -> Self {
        Self(vec![true; frames])
    }

    pub fn none(frames: usize) -> Self {
        Self(vec![false; frames])
    }

    /// Every frame except `dropped`.
    pub fn excluding(frames: usize, dropped: &[usize]) -> Self {
        let mut m = Self::all(frames);
        for &n in dropped {
            if n < frames {
                m.0[n] = false;
            }
        }
        m
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    #[inline]
    pub fn includes(&self, n: usize) -> bool {
        self.0.get(n).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

/// Search box used to seed the genetic algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBounds {
    pub ks_min: f64,
    pub ks_max: f64,
    pub kd_min: f64,
    pub kd_max: f64,
}

impl ParamBounds {
    /// Geometric centre of the box.
    pub fn center(&self) -> SpringParams {
        let [lo, hi] = self.gene_box();
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        from_genes(&mid)
    }

    fn gene_box(&self) -> [[f64; 2]; 2] {
        [
            [self.ks_min.ln(), (self.kd_min + KD_LOG_OFFSET).ln()],
            [self.ks_max.ln(), (self.kd_max + KD_LOG_OFFSET).ln()],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub ga_population: usize,
    pub ga_iterations: usize,
    pub gd_iterations: usize,
    /// Length of the first gradient step in optimisation coordinates.
    pub gd_step: f64,
    pub log_space: bool,
    pub bounds: ParamBounds,
    pub drop_fraction: f64,
    pub regularization_weight: f64,
    pub seed: u64,
    pub tournament_size: usize,
    /// Standard deviation of the mutation in `ln` parameter space.
    pub mutation_sigma: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ga_population: 32,
            ga_iterations: 5,
            gd_iterations: 500,
            gd_step: 0.1,
            log_space: true,
            bounds: ParamBounds {
                ks_min: 1.0,
                ks_max: 1e4,
                kd_min: 1e-2,
                kd_max: 1e3,
            },
            drop_fraction: 0.0,
            regularization_weight: 0.0,
            seed: 0,
            tournament_size: 3,
            mutation_sigma: 0.5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.ga_population < 2 {
            return fail(format!("ga_population must be >= 2, got {}", self.ga_population));
        }
        if self.tournament_size == 0 {
            return fail("tournament_size must be >= 1".into());
        }
        if !(b.ks_min > 0.0 && b.ks_min <= b.ks_max && b.ks_max.is_finite()) {
            return fail(format!("invalid ks bounds [{}, {}]", b.ks_min, b.ks_max));
        }
        if !(b.kd_min >= 0.0 && b.kd_min <= b.kd_max && b.kd_max.is_finite()) {
            return fail(format!("invalid kd bounds [{}, {}]", b.kd_min, b.kd_max));
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return fail(format!("drop_fraction must lie in [0, 1), got {}", self.drop_fraction));
        }
        if !(self.regularization_weight >= 0.0 && self.regularization_weight.is_finite()) {
            return fail("regularization_weight must be nonnegative".into());
        }
        if !(self.gd_step > 0.0 && self.gd_step.is_finite()) {
            return fail("gd_step must be positive".into());
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return fail("mutation_sigma must be nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: SpringParams,
    /// Objective value at `params` (masked frames only, plus regulariser).
    pub final_loss: f64,
    /// Squared error of every frame (masked or not) at `params`.
    pub per_frame_loss: Vec<f64>,
    pub regime: DampingRegime,
    /// Ignored frames, ascending; indices run across sequences in order.
    pub dropped_frames: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

/// Loss and its parameter gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub dks: f64,
    pub dkd: f64,
}

/// One target/truth pair for a particle, with the frames that count.
#[derive(Debug, Clone)]
pub struct Sequence<'a> {
    pub track: &'a SampleTrack,
    pub truth: &'a GroundTruthTrack,
    pub mask: FrameMask,
}

impl<'a> Sequence<'a> {
    pub fn new(track: &'a SampleTrack, truth: &'a GroundTruthTrack) -> Result<Self> {
        Self::masked(track, truth, FrameMask::all(track.len()))
    }

    pub fn masked(track: &'a SampleTrack, truth: &'a GroundTruthTrack, mask: FrameMask) -> Result<Self> {
        if truth.len() != track.len() {
            return Err(Error::Misaligned(format!(
                "target has {} frames but truth has {}",
                track.len(),
                truth.len()
            )));
        }
        if mask.len() != track.len() {
            return Err(Error::Misaligned(format!(
                "mask covers {} frames but the track has {}",
                mask.len(),
                track.len()
            )));
        }
        Ok(Self { track, truth, mask })
    }

    fn per_frame(&self, params: &SpringParams) -> Vec<f64> {
        let stepper = Stepper::new(*params, self.track.dt());
        let truth = self.truth.positions();
        let mut state = initial_state(self.track);
        let mut out = Vec::with_capacity(truth.len());
        out.push((state.x - truth[0]).norm_squared());
        for (n, iv) in self.track.intervals().enumerate() {
            state = stepper.advance(&state, &iv);
            out.push((state.x - truth[n + 1]).norm_squared());
        }
        out
    }

    fn data_loss(&self, params: &SpringParams) -> f64 {
        let stepper = Stepper::new(*params, self.track.dt());
        let truth = self.truth.positions();
        let mut state = initial_state(self.track);
        let mut total = 0.0;
        if self.mask.includes(0) {
            total += (state.x - truth[0]).norm_squared();
        }
        for (n, iv) in self.track.intervals().enumerate() {
            state = stepper.advance(&state, &iv);
            if self.mask.includes(n + 1) {
                total += (state.x - truth[n + 1]).norm_squared();
            }
        }
        total
    }

    fn data_loss_gradient(&self, params: &SpringParams) -> LossGradient {
        let stepper = SensitivityStepper::new(*params, self.track.dt());
        let truth = self.truth.positions();
        let mut state = initial_state(self.track);
        let mut sens = SensitivityState::zero();
        let mut acc = LossGradient {
            loss: 0.0,
            dks: 0.0,
            dkd: 0.0,
        };
        let mut add = |n: usize, x: &Vec3, sens: &SensitivityState| {
            if self.mask.includes(n) {
                let r = x - truth[n];
                acc.loss += r.norm_squared();
                acc.dks += 2.0 * r.dot(&sens.dx_dks);
                acc.dkd += 2.0 * r.dot(&sens.dx_dkd);
            }
        };
        add(0, &state.x, &sens);
        for (n, iv) in self.track.intervals().enumerate() {
            (state, sens) = stepper.advance(&state, &sens, &iv);
            add(n + 1, &state.x, &sens);
        }
        acc
    }
}

/// Summed loss over a particle's sequences plus `w / ks`.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    sequences: Vec<Sequence<'a>>,
    regularization_weight: f64,
}

impl<'a> Objective<'a> {
    pub fn new(sequences: Vec<Sequence<'a>>, regularization_weight: f64) -> Self {
        Self {
            sequences,
            regularization_weight,
        }
    }

    pub fn sequences(&self) -> &[Sequence<'a>] {
        &self.sequences
    }

    pub fn value(&self, params: &SpringParams) -> f64 {
        let data: f64 = self.sequences.iter().map(|s| s.data_loss(params)).sum();
        data + self.regularization_weight / params.ks
    }

    pub fn value_gradient(&self, params: &SpringParams) -> LossGradient {
        let w = self.regularization_weight;
        let mut total = LossGradient {
            loss: w / params.ks,
            dks: -w / (params.ks * params.ks),
            dkd: 0.0,
        };
        for seq in &self.sequences {
            let g = seq.data_loss_gradient(params);
            total.loss += g.loss;
            total.dks += g.dks;
            total.dkd += g.dkd;
        }
        total
    }

    /// Unmasked per-frame squared errors, sequences concatenated.
    pub fn per_frame(&self, params: &SpringParams) -> Vec<f64> {
        self.sequences.iter().flat_map(|s| s.per_frame(params)).collect()
    }
}

/// Squared-error loss over the masked frames of one sequence, plus
/// `regularization_weight / ks`.
pub fn loss(
    track: &SampleTrack,
    truth: &GroundTruthTrack,
    params: &SpringParams,
    mask: &FrameMask,
    regularization_weight: f64,
) -> Result<f64> {
    let seq = Sequence::masked(track, truth, mask.clone())?;
    Ok(Objective::new(vec![seq], regularization_weight).value(params))
}

pub fn loss_gradient(
    track: &SampleTrack,
    truth: &GroundTruthTrack,
    params: &SpringParams,
    mask: &FrameMask,
    regularization_weight: f64,
) -> Result<LossGradient> {
    let seq = Sequence::masked(track, truth, mask.clone())?;
    Ok(Objective::new(vec![seq], regularization_weight).value_gradient(params))
}

pub fn per_frame_loss(
    track: &SampleTrack,
    truth: &GroundTruthTrack,
    params: &SpringParams,
) -> Result<Vec<f64>> {
    Ok(Sequence::new(track, truth)?.per_frame(params))
}

#[inline]
fn to_genes(p: &SpringParams) -> [f64; 2] {
    [p.ks.ln(), (p.kd + KD_LOG_OFFSET).ln()]
}

#[inline]
fn from_genes(g: &[f64; 2]) -> SpringParams {
    SpringParams {
        ks: g[0].exp().max(f64::MIN_POSITIVE),
        kd: (g[1].exp() - KD_LOG_OFFSET).max(0.0),
    }
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Genetic search over `ln ks`, `ln(kd + κ)`: tournament selection, blend
/// crossover, Gaussian mutation in log space, one elite carried over.
/// `seeds` are placed at the front of the initial population.
pub fn genetic_search(objective: &Objective<'_>, cfg: &FitConfig, seeds: &[SpringParams]) -> (SpringParams, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [lo, hi] = cfg.bounds.gene_box();
    let clamp = |g: [f64; 2]| [g[0].clamp(lo[0], hi[0]), g[1].clamp(lo[1], hi[1])];

    let size = cfg.ga_population.max(seeds.len()).max(2);
    // Genes plus the exact parameters they stand for; seeds keep theirs
    // rather than a log/exp round trip.
    let mut pop: Vec<([f64; 2], SpringParams)> = seeds.iter().map(|p| (to_genes(p), *p)).collect();
    while pop.len() < size {
        let g = [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])];
        pop.push((g, from_genes(&g)));
    }
    let mut fitness: Vec<f64> = pop.iter().map(|m| finite_or_inf(objective.value(&m.1))).collect();

    let best_index = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .fold(0, |b, (i, &f)| if f < fit[b] { i } else { b })
    };

    for _ in 0..cfg.ga_iterations {
        let elite = best_index(&fitness);
        let mut next = vec![pop[elite]];
        let mut next_fit = vec![fitness[elite]];
        while next.len() < size {
            let a = pop[tournament(&mut rng, &fitness, cfg.tournament_size)].0;
            let b = pop[tournament(&mut rng, &fitness, cfg.tournament_size)].0;
            let mut child = [0.0; 2];
            for k in 0..2 {
                let u: f64 = rng.random_range(-0.5..1.5);
                child[k] = a[k] + u * (b[k] - a[k]);
                if rng.random_bool(0.5) {
                    let z: f64 = rng.sample(StandardNormal);
                    child[k] += cfg.mutation_sigma * z;
                }
            }
            let child = clamp(child);
            let params = from_genes(&child);
            next_fit.push(finite_or_inf(objective.value(&params)));
            next.push((child, params));
        }
        pop = next;
        fitness = next_fit;
    }
    let best = best_index(&fitness);
    (pop[best].1, fitness[best])
}

fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64], size: usize) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[best] {
            best = c;
        }
    }
    best
}

/// Lowest-loss parameters found by [`genetic_search`] on one sequence.
pub fn genetic_init(track: &SampleTrack, truth: &GroundTruthTrack, cfg: &FitConfig) -> Result<SpringParams> {
    cfg.validate()?;
    let objective = Objective::new(vec![Sequence::new(track, truth)?], cfg.regularization_weight);
    Ok(genetic_search(&objective, cfg, &[]).0)
}

/// Optimisation coordinates: `(ln ks, ln(kd + κ))` or raw `(ks, kd)`.
#[derive(Debug, Clone, Copy)]
struct Coords {
    log: bool,
}

impl Coords {
    fn to_theta(self, p: &SpringParams) -> [f64; 2] {
        if self.log {
            to_genes(p)
        } else {
            [p.ks, p.kd]
        }
    }

    fn params(self, t: &[f64; 2]) -> SpringParams {
        if self.log {
            from_genes(t)
        } else {
            SpringParams {
                ks: t[0].max(f64::MIN_POSITIVE),
                kd: t[1].max(0.0),
            }
        }
    }

    fn eval(self, objective: &Objective<'_>, t: &[f64; 2]) -> (f64, [f64; 2]) {
        let p = self.params(t);
        let g = objective.value_gradient(&p);
        let grad = if self.log {
            let dkd_dt = if p.kd > 0.0 { p.kd + KD_LOG_OFFSET } else { 0.0 };
            [g.dks * p.ks, g.dkd * dkd_dt]
        } else {
            [g.dks, g.dkd]
        };
        (finite_or_inf(g.loss), grad)
    }
}

/// Outcome of [`descend`].
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub params: SpringParams,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Gradient descent with Barzilai–Borwein step proposals and Armijo
/// backtracking (step halving), so accepted iterates never increase the loss.
///
/// Stops as converged when the loss or gradient vanishes, when no decrease
/// can be found, or when the relative loss change over the last ten accepted
/// steps drops below `1e-8`; hitting the iteration cap leaves
/// `converged = false`.
pub fn descend(objective: &Objective<'_>, init: SpringParams, cfg: &FitConfig) -> Descent {
    let coords = Coords { log: cfg.log_space };
    let mut theta = coords.to_theta(&init);
    let (mut f, mut grad) = coords.eval(objective, &theta);
    let mut history = vec![f];
    let mut previous: Option<([f64; 2], [f64; 2])> = None;
    let mut last_step = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.gd_iterations {
        let gnorm2 = grad[0] * grad[0] + grad[1] * grad[1];
        if f == 0.0 || gnorm2 == 0.0 || !f.is_finite() || !gnorm2.is_finite() {
            converged = f.is_finite();
            break;
        }
        let gnorm = gnorm2.sqrt();
        let mut step = match previous {
            Some((tp, gp)) => {
                let s = [theta[0] - tp[0], theta[1] - tp[1]];
                let y = [grad[0] - gp[0], grad[1] - gp[1]];
                let sy = s[0] * y[0] + s[1] * y[1];
                if sy > 0.0 {
                    (s[0] * s[0] + s[1] * s[1]) / sy
                } else {
                    2.0 * last_step
                }
            }
            None => cfg.gd_step / gnorm,
        };
        step = step.min(MAX_MOVE / gnorm);

        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = [theta[0] - step * grad[0], theta[1] - step * grad[1]];
            let (fc, gc) = coords.eval(objective, &cand);
            if fc <= f - ARMIJO * step * gnorm2 {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((cand, fc, gc)) = accepted else {
            converged = true;
            break;
        };
        previous = Some((theta, grad));
        theta = cand;
        f = fc;
        grad = gc;
        last_step = step;
        history.push(f);

        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            if (old - f).abs() <= STALL_TOLERANCE * old.abs() {
                converged = true;
                break;
            }
        }
    }

    Descent {
        params: coords.params(&theta),
        loss: f,
        converged,
        iterations,
        history,
    }
}

/// Genetic initialisation followed by gradient descent over all of a
/// particle's sequences.
pub fn fit_sequences(sequences: Vec<Sequence<'_>>, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let objective = Objective::new(sequences, cfg.regularization_weight);
    let (init, _) = genetic_search(&objective, cfg, &[]);
    let d = descend(&objective, init, cfg);
    Ok(FitResult {
        params: d.params,
        final_loss: d.loss,
        per_frame_loss: objective.per_frame(&d.params),
        regime: d.params.regime(),
        dropped_frames: Vec::new(),
        converged: d.converged,
        iterations: d.iterations,
    })
}

pub fn fit_particle(track: &SampleTrack, truth: &GroundTruthTrack, cfg: &FitConfig) -> Result<FitResult> {
    fit_sequences(vec![Sequence::new(track, truth)?], cfg)
}

/// Frames to drop from one sequence: the `⌊fraction·N⌋` highest per-frame
/// losses, ties broken by lower frame index first.
pub fn highest_loss_frames(per_frame: &[f64], fraction: f64) -> Vec<usize> {
    let count = (fraction * per_frame.len() as f64).floor() as usize;
    let mut order: Vec<usize> = (0..per_frame.len()).collect();
    order.sort_by(|&a, &b| per_frame[b].total_cmp(&per_frame[a]).then(a.cmp(&b)));
    let mut dropped: Vec<usize> = order.into_iter().take(count).collect();
    dropped.sort_unstable();
    dropped
}

/// Fit on all frames, drop each sequence's highest-loss fraction of frames
/// under the fitted model, then continue descent on the retained frames from
/// the first fit.
pub fn robust_refit_sequences(sequences: Vec<Sequence<'_>>, cfg: &FitConfig) -> Result<FitResult> {
    let first = fit_sequences(sequences.clone(), cfg)?;
    if cfg.drop_fraction == 0.0 {
        return Ok(first);
    }

    let mut dropped_global = Vec::new();
    let mut masked = Vec::with_capacity(sequences.len());
    let mut offset = 0;
    for seq in sequences {
        let n = seq.track.len();
        let dropped = highest_loss_frames(&first.per_frame_loss[offset..offset + n], cfg.drop_fraction);
        dropped_global.extend(dropped.iter().map(|d| d + offset));
        let flags = (0..n)
            .map(|i| seq.mask.includes(i) && dropped.binary_search(&i).is_err())
            .collect();
        masked.push(Sequence {
            mask: FrameMask::from_flags(flags),
            ..seq
        });
        offset += n;
    }

    let objective = Objective::new(masked, cfg.regularization_weight);
    let d = descend(&objective, first.params, cfg);
    Ok(FitResult {
        params: d.params,
        final_loss: d.loss,
        per_frame_loss: objective.per_frame(&d.params),
        regime: d.params.regime(),
        dropped_frames: dropped_global,
        converged: d.converged,
        iterations: first.iterations + d.iterations,
    })
}

pub fn robust_refit(track: &SampleTrack, truth: &GroundTruthTrack, cfg: &FitConfig) -> Result<FitResult> {
    robust_refit_sequences(vec![Sequence::new(track, truth)?], cfg)
}

/// Independent per-particle fits, in input order. Uses [`robust_refit`] when
/// `cfg.drop_fraction > 0`.
pub fn fit_all(tracks: &[SampleTrack], truths: &[GroundTruthTrack], cfg: &FitConfig) -> Vec<Result<FitResult>> {
    if tracks.len() != truths.len() {
        let msg = format!("{} target tracks but {} truth tracks", tracks.len(), truths.len());
        return vec![Err(Error::Misaligned(msg))];
    }
    tracks
        .par_iter()
        .zip(truths.par_iter())
        .map(|(track, truth)| {
            if cfg.drop_fraction > 0.0 {
                robust_refit(track, truth, cfg)
            } else {
                fit_particle(track, truth, cfg)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spring::step_sequence;

    fn p(ks: f64, kd: f64) -> SpringParams {
        SpringParams::new(ks, kd).unwrap()
    }

    fn wavy(frames: usize, dt: f64) -> SampleTrack {
        let pos = (0..frames)
            .map(|n| {
                let t = n as f64 * dt;
                Vec3::new(
                    (2.1 * t).sin() + 0.3 * (5.3 * t).cos(),
                    0.5 * (3.7 * t + 0.4).sin(),
                    0.2 * t * t - (1.3 * t).cos(),
                )
            })
            .collect();
        SampleTrack::new(pos, dt).unwrap()
    }

    fn truth_of(track: &SampleTrack, prm: &SpringParams) -> GroundTruthTrack {
        GroundTruthTrack::new(step_sequence(track, prm, None).iter().map(|s| s.x).collect())
    }

    #[test]
    fn self_consistent_truth_has_zero_loss() {
        let track = wavy(40, 1.0 / 30.0);
        let prm = p(150.0, 3.0);
        let truth = truth_of(&track, &prm);
        let mask = FrameMask::all(40);
        assert_eq!(loss(&track, &truth, &prm, &mask, 0.0).unwrap(), 0.0);
        let g = loss_gradient(&track, &truth, &prm, &mask, 0.0).unwrap();
        assert_eq!((g.loss, g.dks, g.dkd), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_frame_norm() {
        let track = SampleTrack::from_scalars(&[0.0, 0.0], 0.1).unwrap();
        let truth = GroundTruthTrack::new(vec![Vec3::new(1.0, 2.0, 2.0), Vec3::zeros()]);
        let mask = FrameMask::excluding(2, &[1]);
        assert_eq!(loss(&track, &truth, &p(1.0, 1.0), &mask, 0.0).unwrap(), 9.0);
    }

    #[test]
    fn empty_mask_without_regulariser_is_zero() {
        let track = wavy(20, 0.05);
        let truth = GroundTruthTrack::new(vec![Vec3::repeat(3.0); 20]);
        let g = loss_gradient(&track, &truth, &p(10.0, 1.0), &FrameMask::none(20), 0.0).unwrap();
        assert_eq!((g.loss, g.dks, g.dkd), (0.0, 0.0, 0.0));
        let g = loss_gradient(&track, &truth, &p(10.0, 1.0), &FrameMask::none(20), 2.0).unwrap();
        assert_eq!((g.loss, g.dks, g.dkd), (0.2, -0.02, 0.0));
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let track = wavy(20, 0.05);
        let truth = GroundTruthTrack::new(vec![Vec3::zeros(); 19]);
        assert!(matches!(
            loss(&track, &truth, &p(1.0, 1.0), &FrameMask::all(20), 0.0),
            Err(Error::Misaligned(_))
        ));
        let truth = GroundTruthTrack::new(vec![Vec3::zeros(); 20]);
        assert!(loss(&track, &truth, &p(1.0, 1.0), &FrameMask::all(19), 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            drop_fraction: 1.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let mut bad = FitConfig::default();
        bad.bounds.ks_min = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn elitism_keeps_a_perfect_seed() {
        let track = wavy(30, 1.0 / 30.0);
        let truth_params = p(200.0, 4.0);
        let truth = truth_of(&track, &truth_params);
        let objective = Objective::new(vec![Sequence::new(&track, &truth).unwrap()], 0.0);
        let (best, f) = genetic_search(&objective, &FitConfig::default(), &[truth_params]);
        assert_eq!(f, 0.0);
        assert_eq!(objective.value(&best), 0.0);
    }

    #[test]
    fn genetic_init_is_deterministic_and_beats_the_centre() {
        let track = wavy(60, 1.0 / 30.0);
        let truth = truth_of(&track, &p(200.0, 4.0));
        let cfg = FitConfig::default();
        let a = genetic_init(&track, &truth, &cfg).unwrap();
        let b = genetic_init(&track, &truth, &cfg).unwrap();
        assert_eq!(a, b);
        let mask = FrameMask::all(60);
        let found = loss(&track, &truth, &a, &mask, 0.0).unwrap();
        let centre = loss(&track, &truth, &cfg.bounds.center(), &mask, 0.0).unwrap();
        assert!(found <= centre, "{found} > {centre}");
    }

    #[test]
    fn descent_never_increases_loss() {
        let track = wavy(60, 1.0 / 30.0);
        let truth = truth_of(&track, &p(90.0, 2.5));
        let objective = Objective::new(vec![Sequence::new(&track, &truth).unwrap()], 0.0);
        for log_space in [true, false] {
            let cfg = FitConfig {
                log_space,
                gd_iterations: 60,
                ..FitConfig::default()
            };
            let d = descend(&objective, p(40.0, 6.0), &cfg);
            assert!(d.history.windows(2).all(|w| w[1] <= w[0]));
            assert!(d.loss < d.history[0]);
        }
    }

    #[test]
    fn constant_data_converges_immediately() {
        let track = SampleTrack::from_scalars(&[1.5; 30], 1.0 / 30.0).unwrap();
        let truth = GroundTruthTrack::from(&track);
        let r = fit_particle(&track, &truth, &FitConfig::default()).unwrap();
        assert_eq!(r.final_loss, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn dropping_nothing_matches_plain_fit() {
        let track = wavy(40, 1.0 / 30.0);
        let truth = truth_of(&track, &p(120.0, 2.0));
        let cfg = FitConfig {
            gd_iterations: 50,
            ..FitConfig::default()
        };
        assert_eq!(
            robust_refit(&track, &truth, &cfg).unwrap(),
            fit_particle(&track, &truth, &cfg).unwrap()
        );
    }

    #[test]
    fn highest_loss_ranking_is_stable() {
        let losses = [1.0, 5.0, 3.0, 5.0, 0.0, 2.0, 5.0, 1.0, 0.5, 0.1];
        assert_eq!(highest_loss_frames(&losses, 0.2), vec![1, 3]);
        assert_eq!(highest_loss_frames(&losses, 0.35), vec![1, 3, 6]);
        assert!(highest_loss_frames(&losses, 0.0).is_empty());
    }

    #[test]
    fn fit_all_handles_empty_and_duplicate_particles() {
        let cfg = FitConfig {
            gd_iterations: 40,
            ..FitConfig::default()
        };
        assert!(fit_all(&[], &[], &cfg).is_empty());
        let track = wavy(40, 1.0 / 30.0);
        let truth = truth_of(&track, &p(60.0, 1.0));
        let out = fit_all(&[track.clone(), track], &[truth.clone(), truth], &cfg);
        let a = out[0].as_ref().unwrap();
        let b = out[1].as_ref().unwrap();
        assert_eq!(a, b);
    }
}
