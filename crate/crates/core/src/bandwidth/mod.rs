//! Data-driven choice of the smoothing parameter `b`.
//!
//! At each step the prior swarm is summarized by a Gaussian variance pilot and
//! a two-component mixture bias pilot; the approximate MSE of the likelihood
//! estimate `C(b)` then has a closed form and is minimized over `[0, 1]`.

mod criterion;
mod pilot;

pub use criterion::{
    criterion, f0, f1, f2, f3, practical_bias_sq, practical_variance, practical_variance_terms, CriterionContext,
    CriterionTerms, LogF,
};
pub use pilot::{fit_bias_pilot, BiasPilot, PilotStatus, VariancePilot, DEFAULT_PILOT_SUBSAMPLE};

use nalgebra::{DMatrix, DVector};

use crate::error::{PspfError, Result};
use crate::minimize::minimize_bounded;
use crate::model::LinearObservation;
use crate::rng::StreamRng;
use crate::swarm::Swarm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthOptions {
    pub em_iters: usize,
    /// Particles used to fit the bias pilot; `None` uses all.
    pub pilot_subsample: Option<usize>,
    /// Absolute tolerance on `b` of the bounded search.
    pub xatol: f64,
    pub max_evals: usize,
}

impl Default for BandwidthOptions {
    fn default() -> Self {
        Self {
            em_iters: 4,
            pilot_subsample: Some(DEFAULT_PILOT_SUBSAMPLE),
            xatol: 1e-3,
            max_evals: 100,
        }
    }
}

/// Outcome of [`select_bandwidth`].
#[derive(Debug, Clone)]
pub struct BandwidthSelection {
    pub b: f64,
    /// Criterion terms at the selected `b`.
    pub terms: CriterionTerms,
    /// Criterion evaluations, including the two boundary checks.
    pub evaluations: usize,
    pub pilot_status: PilotStatus,
    pub bias_pilot: BiasPilot,
}

/// Selects `b` for the prior swarm `swarm` and observation `y`.
pub fn select_bandwidth(
    swarm: &Swarm,
    y: &[f64],
    obs: &LinearObservation,
    opts: &BandwidthOptions,
    rng: &mut StreamRng,
) -> Result<BandwidthSelection> {
    let moments = swarm.moments()?;
    select_with_moments(swarm, &moments, y, obs, opts, rng)
}

pub(crate) fn select_with_moments(
    swarm: &Swarm,
    (mean, cov): &(DVector<f64>, DMatrix<f64>),
    y: &[f64],
    obs: &LinearObservation,
    opts: &BandwidthOptions,
    rng: &mut StreamRng,
) -> Result<BandwidthSelection> {
    if swarm.n() < 4 {
        return Err(PspfError::InsufficientSample {
            required: 4,
            actual: swarm.n(),
        });
    }
    let variance = VariancePilot {
        mean: mean.clone(),
        cov: cov.clone(),
    };
    let (bias_pilot, pilot_status) = fit_bias_pilot(swarm, opts.em_iters, opts.pilot_subsample, rng)?;
    let ctx = CriterionContext::new(y, obs, swarm.n(), &variance, &bias_pilot)?;
    let objective = |b: f64| ctx.terms(b).map(|t| t.total()).unwrap_or(f64::INFINITY);
    let found = minimize_bounded(objective, 0.0, 1.0, opts.xatol, opts.max_evals);
    let mut best = (found.x, found.value);
    for edge in [0.0, 1.0] {
        let v = objective(edge);
        if v < best.1 {
            best = (edge, v);
        }
    }
    let terms = ctx.terms(best.0)?;
    Ok(BandwidthSelection {
        b: best.0,
        terms,
        evaluations: found.evaluations + 2,
        pilot_status,
        bias_pilot,
    })
}

/// `b` implied by the Gaussian-reference MISE plug-in bandwidth
/// `h = (4 / (d + 2))^(1 / (d + 4)) n^(-1 / (d + 4))`, `b = 1 / sqrt(1 + h^2)`.
pub fn mise_plugin_b(n: usize, dim: usize) -> f64 {
    let d = dim as f64;
    let h = (4.0 / (d + 2.0)).powf(1.0 / (d + 4.0)) * (n as f64).powf(-1.0 / (d + 4.0));
    1.0 / (1.0 + h * h).sqrt()
}
