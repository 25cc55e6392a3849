use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ::zerospring::fitting::{self, FitConfig, FitResult, FrameMask, GroundTruthTrack};
use ::zerospring::io::{self, Encoding, FormatError, TrajectoryKind, TrajectorySet};
use ::zerospring::oracle::{self, SpikeModel};
use ::zerospring::{gradient, special, spring, Error, SampleTrack, Vec3};

type Points = Vec<[f64; 3]>;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Format(FormatError::Io(_)) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_vec3(p: &[[f64; 3]]) -> Vec<Vec3> {
    p.iter().map(|v| Vec3::from(*v)).collect()
}

fn to_points<'a>(v: impl IntoIterator<Item = &'a Vec3>) -> Points {
    v.into_iter().map(|x| [x[0], x[1], x[2]]).collect()
}

fn track(positions: &[[f64; 3]], dt: f64) -> PyResult<SampleTrack> {
    SampleTrack::new(to_vec3(positions), dt).map_err(py_err)
}

fn params(ks: f64, kd: f64) -> PyResult<spring::SpringParams> {
    spring::SpringParams::new(ks, kd).map_err(py_err)
}

#[pyfunction]
fn cosh_e(eps: f64) -> f64 {
    special::cosh_e(eps)
}

#[pyfunction]
fn sinhc(eps: f64) -> f64 {
    special::sinhc(eps)
}

#[pyfunction]
fn sinc_e(eps: f64) -> f64 {
    special::sinc_e(eps)
}

#[pyfunction]
fn h_over(eps: f64) -> f64 {
    special::h_over(eps)
}

#[pyfunction]
fn h_under(eps: f64) -> f64 {
    special::h_under(eps)
}

/// Stiffness and damping of one spring.
#[pyclass(name = "SpringParams", frozen)]
struct PySpringParams {
    inner: spring::SpringParams,
}

#[pymethods]
impl PySpringParams {
    #[new]
    fn new(ks: f64, kd: f64) -> PyResult<Self> {
        Ok(Self { inner: params(ks, kd)? })
    }

    #[getter]
    fn ks(&self) -> f64 {
        self.inner.ks
    }

    #[getter]
    fn kd(&self) -> f64 {
        self.inner.kd
    }

    /// `kd² - 4ks`.
    fn discriminant(&self) -> f64 {
        self.inner.discriminant()
    }

    fn regime(&self) -> &'static str {
        self.inner.regime().kind.label()
    }

    fn __repr__(&self) -> String {
        format!("SpringParams(ks={}, kd={})", self.inner.ks, self.inner.kd)
    }
}

/// Regime label and discriminant, treating `|D| <= tol·4ks` as critical.
#[pyfunction]
#[pyo3(signature = (ks, kd, tol = 1e-9))]
fn classify(ks: f64, kd: f64, tol: f64) -> PyResult<(&'static str, f64)> {
    let p = params(ks, kd)?;
    Ok((spring::classify(&p, tol).kind.label(), p.discriminant()))
}

/// Positions and velocities at every sample.
#[pyfunction]
fn step_sequence(positions: Points, dt: f64, ks: f64, kd: f64) -> PyResult<(Points, Points)> {
    let states = spring::step_sequence(&track(&positions, dt)?, &params(ks, kd)?, None);
    Ok((
        to_points(states.iter().map(|s| &s.x)),
        to_points(states.iter().map(|s| &s.v)),
    ))
}

/// Positions with `∂x/∂ks` and `∂x/∂kd` at every sample.
#[pyfunction]
fn propagate_sequence(positions: Points, dt: f64, ks: f64, kd: f64) -> PyResult<(Points, Points, Points)> {
    let (states, sens) = gradient::propagate_sequence(&track(&positions, dt)?, &params(ks, kd)?, None);
    Ok((
        to_points(states.iter().map(|s| &s.x)),
        to_points(sens.iter().map(|s| &s.dx_dks)),
        to_points(sens.iter().map(|s| &s.dx_dkd)),
    ))
}

/// `(loss, dL/dks, dL/dkd)`, skipping `dropped` frames.
#[pyfunction]
#[pyo3(signature = (positions, truth, dt, ks, kd, dropped = None, regularization_weight = 0.0))]
fn loss_and_gradient(
    positions: Points,
    truth: Points,
    dt: f64,
    ks: f64,
    kd: f64,
    dropped: Option<Vec<usize>>,
    regularization_weight: f64,
) -> PyResult<(f64, f64, f64)> {
    let t = track(&positions, dt)?;
    let mask = FrameMask::excluding(t.len(), &dropped.unwrap_or_default());
    let g = fitting::loss_gradient(
        &t,
        &GroundTruthTrack::new(to_vec3(&truth)),
        &params(ks, kd)?,
        &mask,
        regularization_weight,
    )
    .map_err(py_err)?;
    Ok((g.loss, g.dks, g.dkd))
}

#[pyclass(name = "FitResult", frozen, get_all)]
struct PyFitResult {
    ks: f64,
    kd: f64,
    regime: &'static str,
    discriminant: f64,
    final_loss: f64,
    dropped_frames: Vec<usize>,
    converged: bool,
    iterations: usize,
}

#[pymethods]
impl PyFitResult {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(ks={}, kd={}, regime={:?}, final_loss={:e}, converged={})",
            self.ks, self.kd, self.regime, self.final_loss, self.converged
        )
    }
}

impl From<FitResult> for PyFitResult {
    fn from(r: FitResult) -> Self {
        Self {
            ks: r.params.ks,
            kd: r.params.kd,
            regime: r.regime.kind.label(),
            discriminant: r.params.discriminant(),
            final_loss: r.final_loss,
            dropped_frames: r.dropped_frames,
            converged: r.converged,
            iterations: r.iterations,
        }
    }
}

fn config(seed: u64, drop_fraction: f64, config_text: Option<&str>) -> PyResult<FitConfig> {
    let mut cfg = match config_text {
        Some(text) => io::parse_config(text, FitConfig::default()).map_err(py_err)?,
        None => FitConfig::default(),
    };
    cfg.seed = seed;
    cfg.drop_fraction = drop_fraction;
    Ok(cfg)
}

/// Genetic search then gradient descent. `config` is `key = value` text.
#[pyfunction]
#[pyo3(signature = (positions, truth, dt, seed = 0, config = None))]
fn fit_particle(positions: Points, truth: Points, dt: f64, seed: u64, config: Option<&str>) -> PyResult<PyFitResult> {
    let cfg = self::config(seed, 0.0, config)?;
    let r = fitting::fit_particle(&track(&positions, dt)?, &GroundTruthTrack::new(to_vec3(&truth)), &cfg);
    Ok(r.map_err(py_err)?.into())
}

/// Fit, drop the worst `drop_fraction` of frames, refit.
#[pyfunction]
#[pyo3(signature = (positions, truth, dt, drop_fraction = 0.1, seed = 0, config = None))]
fn robust_refit(
    positions: Points,
    truth: Points,
    dt: f64,
    drop_fraction: f64,
    seed: u64,
    config: Option<&str>,
) -> PyResult<PyFitResult> {
    let cfg = self::config(seed, drop_fraction, config)?;
    let r = fitting::robust_refit(&track(&positions, dt)?, &GroundTruthTrack::new(to_vec3(&truth)), &cfg);
    Ok(r.map_err(py_err)?.into())
}

/// Backward-Euler positions at every sample.
#[pyfunction]
#[pyo3(signature = (positions, dt, ks, kd, substeps = 200))]
fn be_simulate(positions: Points, dt: f64, ks: f64, kd: f64, substeps: usize) -> PyResult<Points> {
    let states = oracle::be_simulate(&track(&positions, dt)?, &params(ks, kd)?, None, substeps).map_err(py_err)?;
    Ok(to_points(states.iter().map(|s| &s.x)))
}

/// Backward-Euler truth with optional outlier frames; returns `(truth, spiked_frames)`.
#[pyfunction]
#[pyo3(signature = (positions, dt, ks, kd, substeps = 200, spike_fraction = 0.0, spike_magnitude = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synth_truth(
    positions: Points,
    dt: f64,
    ks: f64,
    kd: f64,
    substeps: usize,
    spike_fraction: f64,
    spike_magnitude: f64,
    seed: u64,
) -> PyResult<(Points, Vec<usize>)> {
    let spikes = SpikeModel {
        fraction: spike_fraction,
        magnitude: spike_magnitude,
        seed,
    };
    let (truth, frames) =
        oracle::synth_truth(&track(&positions, dt)?, &params(ks, kd)?, None, substeps, &spikes).map_err(py_err)?;
    Ok((to_points(truth.positions()), frames))
}

/// `(dt, kind, per-particle positions)`.
#[pyfunction]
fn read_trajectory(path: &str) -> PyResult<(f64, &'static str, Vec<Points>)> {
    let set = io::read_trajectory(path).map_err(py_err)?;
    let per = (0..set.particles())
        .map(|i| to_points(&set.particle_positions(i)))
        .collect();
    Ok((set.dt(), set.kind().label(), per))
}

#[pyfunction]
#[pyo3(signature = (path, particles, dt, kind = "target", text = false))]
fn write_trajectory(path: &str, particles: Vec<Points>, dt: f64, kind: &str, text: bool) -> PyResult<()> {
    let kind = TrajectoryKind::parse(kind).ok_or_else(|| PyValueError::new_err(format!("unknown kind {kind:?}")))?;
    let per: Vec<Vec<Vec3>> = particles.iter().map(|p| to_vec3(p)).collect();
    let set = TrajectorySet::from_particles(&per, dt, kind).map_err(py_err)?;
    let enc = if text { Encoding::Text } else { Encoding::Binary };
    io::write_trajectory(path, &set, enc).map_err(py_err)
}

#[pymodule]
#[pyo3(name = "zerospring")]
fn zerospring_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpringParams>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(cosh_e, m)?)?;
    m.add_function(wrap_pyfunction!(sinhc, m)?)?;
    m.add_function(wrap_pyfunction!(sinc_e, m)?)?;
    m.add_function(wrap_pyfunction!(h_over, m)?)?;
    m.add_function(wrap_pyfunction!(h_under, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(step_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(loss_and_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(fit_particle, m)?)?;
    m.add_function(wrap_pyfunction!(robust_refit, m)?)?;
    m.add_function(wrap_pyfunction!(be_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(synth_truth, m)?)?;
    m.add_function(wrap_pyfunction!(read_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(write_trajectory, m)?)?;
    Ok(())
}
