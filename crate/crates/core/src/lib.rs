//! Zero-restlength springs driven by piecewise-cubic targets, integrated in
//! closed form, with per-particle learning of stiffness and damping from
//! ground-truth trajectories.
//!
//! Each simulated particle obeys `ẍ = ks (x̂ - x) + kd (ẋ̂ - ẋ)` where the
//! target `x̂(t)` is a C¹ cubic through uniformly spaced samples. Because the
//! target is a cubic on every sample interval, the motion on the interval is
//! known exactly: there is no integrator and no time-step restriction.
//!
//! * [`kinematics`] builds the cubic target from samples.
//! * [`spring`] evaluates the closed-form solution and steps it across
//!   intervals.
//! * [`gradient`] carries exact `∂/∂ks` and `∂/∂kd` sensitivities alongside.
//! * [`fitting`] learns per-particle parameters (genetic initialisation,
//!   gradient descent, outlier-frame rejection).
//! * [`oracle`] is an independent backward-Euler integrator of the same ODE.
//! * [`io`] holds the trajectory, fit-report and config file formats.

pub mod batch;
pub mod error;
pub mod fitting;
pub mod gradcheck;
pub mod gradient;
pub mod io;
pub mod kinematics;
pub mod oracle;
pub mod special;
pub mod spring;

pub use error::{Error, Result};
pub use fitting::{FitConfig, FitResult, FrameMask, GroundTruthTrack};
pub use gradient::SensitivityState;
pub use kinematics::{CubicInterval, SampleTrack};
pub use spring::{DampingRegime, Gammas, ParticleState, RegimeKind, SpringParams};

/// Three-component vector used for positions, velocities and their partials.
pub type Vec3 = nalgebra::Vector3<f64>;
