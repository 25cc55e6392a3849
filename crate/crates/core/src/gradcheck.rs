//! Randomised comparison of the analytic loss gradient with central finite
//! differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fitting::{loss, loss_gradient, FrameMask, GroundTruthTrack};
use crate::kinematics::SampleTrack;
use crate::spring::{step_sequence, RegimeKind, SpringParams};
use crate::Vec3;

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-5;
pub const DEFAULT_CASES: usize = 120;
/// Stiffness range of the default sweep. Much outside it the loss is either
/// nearly flat in one parameter or dominated by round-off, and a `1e-6`
/// central difference stops resolving the gradient.
pub const KS_RANGE: (f64, f64) = (1.0, 2e3);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Overdamped,
    Underdamped,
    /// `|kd² - 4ks|` between `1e-8·4ks` and `1e-3·4ks`, either side.
    NearCritical,
}

#[derive(Debug, Clone)]
pub struct GradCase {
    pub kind: CaseKind,
    pub track: SampleTrack,
    pub truth: GroundTruthTrack,
    pub params: SpringParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub analytic: [f64; 2],
    pub numeric: [f64; 2],
    /// Per-component `|analytic - numeric| / max(|analytic|, |numeric|)`.
    pub rel_error: [f64; 2],
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_error[0].max(self.rel_error[1])
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub cases: Vec<(CaseKind, SpringParams, GradCheck)>,
}

impl SweepReport {
    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.2.max_rel_error()).fold(0.0, f64::max)
    }

    pub fn count(&self, kind: CaseKind) -> usize {
        self.cases.iter().filter(|c| c.0 == kind).count()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= TOLERANCE
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn random_track(rng: &mut ChaCha8Rng) -> SampleTrack {
    let frames = rng.random_range(8..40);
    let dt = [1.0 / 60.0, 1.0 / 30.0, 0.1][rng.random_range(0..3)];
    let mut terms = Vec::new();
    for _ in 0..3 {
        let amp = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        terms.push((amp, rng.random_range(0.5..8.0), rng.random_range(0.0..6.3)));
    }
    let positions = (0..frames)
        .map(|n| {
            let t = n as f64 * dt;
            terms.iter().map(|(a, w, ph)| a * (w * t + ph).sin()).sum()
        })
        .collect();
    SampleTrack::new(positions, dt).expect("generated track is valid")
}

fn random_params(rng: &mut ChaCha8Rng, kind: CaseKind, ks_range: (f64, f64)) -> SpringParams {
    let ks = log_uniform(rng, ks_range.0, ks_range.1);
    let crit = 2.0 * ks.sqrt();
    let kd = match kind {
        CaseKind::Overdamped => crit * rng.random_range(1.05..4.0),
        CaseKind::Underdamped => crit * rng.random_range(0.02..0.95),
        CaseKind::NearCritical => {
            let delta = log_uniform(rng, 1e-8, 1e-3);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            crit * (1.0 + sign * delta).sqrt()
        }
    };
    SpringParams { ks, kd }
}

/// Random case: a smooth multi-sine target, and truth simulated from the same
/// target with parameters scaled by random factors in `[0.3, 3]`.
pub fn random_case(rng: &mut ChaCha8Rng, kind: CaseKind) -> GradCase {
    random_case_in(rng, kind, KS_RANGE)
}

/// As [`random_case`] with stiffness drawn log-uniformly from `ks_range`.
pub fn random_case_in(rng: &mut ChaCha8Rng, kind: CaseKind, ks_range: (f64, f64)) -> GradCase {
    let track = random_track(rng);
    let params = random_params(rng, kind, ks_range);
    let other = SpringParams {
        ks: params.ks * rng.random_range(0.3..3.0),
        kd: params.kd * rng.random_range(0.3..3.0),
    };
    let truth = step_sequence(&track, &other, None).iter().map(|s| s.x).collect();
    GradCase {
        kind,
        track,
        truth: GroundTruthTrack::new(truth),
        params,
    }
}

/// Analytic gradient of the full-mask loss versus central differences with
/// step `FD_STEP · k` in each parameter.
pub fn check_case(case: &GradCase) -> GradCheck {
    let mask = FrameMask::all(case.track.len());
    let f = |p: SpringParams| loss(&case.track, &case.truth, &p, &mask, 0.0).expect("aligned case");
    let g = loss_gradient(&case.track, &case.truth, &case.params, &mask, 0.0).expect("aligned case");
    let SpringParams { ks, kd } = case.params;
    let hs = FD_STEP * ks;
    let hd = FD_STEP * kd;
    let nks = (f(SpringParams { ks: ks + hs, kd }) - f(SpringParams { ks: ks - hs, kd })) / (2.0 * hs);
    let nkd = (f(SpringParams { ks, kd: kd + hd }) - f(SpringParams { ks, kd: kd - hd })) / (2.0 * hd);
    let rel = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    };
    GradCheck {
        analytic: [g.dks, g.dkd],
        numeric: [nks, nkd],
        rel_error: [rel(g.dks, nks), rel(g.dkd, nkd)],
    }
}

/// `cases` seeded cases cycling through the three regime kinds.
pub fn sweep(seed: u64, cases: usize) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [CaseKind::Overdamped, CaseKind::Underdamped, CaseKind::NearCritical];
    let cases = (0..cases)
        .map(|i| {
            let case = random_case(&mut rng, kinds[i % 3]);
            (case.kind, case.params, check_case(&case))
        })
        .collect();
    SweepReport { cases }
}

impl CaseKind {
    pub fn label(self) -> &'static str {
        match self {
            CaseKind::Overdamped => RegimeKind::Overdamped.label(),
            CaseKind::Underdamped => RegimeKind::Underdamped.label(),
            CaseKind::NearCritical => "near-critical",
        }
    }
}
