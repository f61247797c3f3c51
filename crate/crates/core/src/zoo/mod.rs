//! Benchmark models.

mod cev;
mod linear_mixture;
mod squared;

pub use cev::{CevFamily, CevModel, CevParams, CEV_DT, CEV_FLOOR};
pub use linear_mixture::{exact_loglik, LinearMixtureFamily, LinearMixtureModel};
pub use squared::{reference_sir_loglik, AugmentedSquaredObs, SquaredObsModel, REFERENCE_SIR_PARTICLES};
