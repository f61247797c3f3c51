//! Pre-smoothed particle filtering.
//!
//! The crate provides the pre-smoothed (PS) Bayes update for linear Gaussian
//! measurements, data-driven selection of the smoothing parameter, standard
//! and continuous resampling, a family of particle filters sharing one
//! interface, simulated maximum likelihood, and a few benchmark models.

pub mod augment;
pub mod bandwidth;
pub mod error;
pub mod filters;
pub mod gaussian;
pub mod kalman;
pub mod linalg;
pub mod minimize;
pub mod mixture;
pub mod model;
pub mod ps_update;
pub mod resampling;
pub mod rng;
pub mod swarm;
pub mod zoo;

pub use error::{PspfError, Result};
pub use filters::{run_filter, FilterConfig, FilterKind, FilterRun, Resampler, Smoothing};
pub use mixture::HomoskedasticGaussianMixture;
pub use model::{Capabilities, LinearGaussianSsm, LinearObservation, StateSpaceModel, Trajectory};
pub use ps_update::{ps_update, shrunk_kernel, PsUpdateResult, ShrinkageParams};
pub use swarm::Swarm;
