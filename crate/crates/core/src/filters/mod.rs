//! Particle filters sharing one configuration and one output type.
//!
//! Every filter returns the sum of log-likelihood increments
//! `log p_hat(y_t | Y_{t-1})` together with per-step records. Random numbers
//! come from one stream per (purpose, time step), so runs are reproducible
//! and, with continuous resampling, smooth in the model parameters.

mod auxiliary;
mod pspf;
mod sir;
mod sml;

pub use auxiliary::{run_asir, run_fasir};
pub use pspf::{run_enkf, run_mise_pre, run_pspf};
pub use sir::{run_mise_post, run_sir};
pub use sml::{estimate_sml, LikelihoodMethod, ModelFamily, SmlOptions, SmlResult};

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::bandwidth::{BandwidthOptions, CriterionTerms, PilotStatus};
use crate::error::{PspfError, Result};
use crate::mixture::HomoskedasticGaussianMixture;
use crate::model::{Capabilities, LinearObservation, StateSpaceModel};
use crate::resampling::{
    resample_continuous_1d, resample_continuous_2d, sample_mixture_direct, GridDiagnostics, DEFAULT_GRID_1D,
    DEFAULT_GRID_2D,
};
use crate::rng::{RngStream, Purpose, StreamRng};
use crate::swarm::Swarm;

/// How an equally weighted swarm is drawn from the posterior representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resampler {
    /// Continuous grid resampling for dimensions 1 and 2, direct sampling otherwise.
    Auto,
    /// Multinomial component choice followed by a Gaussian draw.
    Direct,
    /// Same draws as `Direct`; named for filters whose posterior is a set of point masses.
    Multinomial,
    Continuous1d { grid: usize },
    Continuous2d { grid: [usize; 2] },
}

impl Default for Resampler {
    fn default() -> Self {
        Resampler::Auto
    }
}

/// Choice of the smoothing parameter in the pre-smoothed filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Minimize the approximate MSE of the likelihood increment at every step.
    Adaptive,
    Fixed(f64),
    /// Gaussian-reference MISE plug-in bandwidth times `scale`.
    MisePlugIn { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub n: usize,
    pub seed: u64,
    pub resampler: Resampler,
    pub smoothing: Smoothing,
    pub bandwidth: BandwidthOptions,
    /// Keep every filter swarm in [`FilterRun::swarms`].
    pub store_swarms: bool,
    /// Record the 2.5% and 97.5% posterior quantiles of this state coordinate.
    pub band_coordinate: Option<usize>,
}

impl FilterConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            resampler: Resampler::Auto,
            smoothing: Smoothing::Adaptive,
            bandwidth: BandwidthOptions::default(),
            store_swarms: false,
            band_coordinate: None,
        }
    }

    pub fn with_resampler(mut self, r: Resampler) -> Self {
        self.resampler = r;
        self
    }

    pub fn with_smoothing(mut self, s: Smoothing) -> Self {
        self.smoothing = s;
        self
    }

    fn stream(&self, purpose: Purpose, t: usize) -> StreamRng {
        RngStream::for_step(self.seed, purpose, t as u64).rng()
    }
}

/// Diagnostics of one filter step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub log_increment: f64,
    /// Mean of the filter distribution `p_hat(x_t | Y_t)`.
    pub posterior_mean: Vec<f64>,
    /// Smoothing parameter used (pre-smoothed filters).
    pub b: Option<f64>,
    /// Criterion terms at the selected `b` (adaptive smoothing).
    pub criterion: Option<CriterionTerms>,
    pub pilot_status: Option<PilotStatus>,
    /// Effective sample size `1 / sum w_i^2` of the posterior weights.
    pub ess: f64,
    pub band: Option<[f64; 2]>,
    pub grid: Option<GridDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub loglik: f64,
    pub increments: Vec<f64>,
    /// Smoothing parameter per step; empty for filters without one.
    pub b_trace: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Filter swarms `x_t^f`, when requested.
    pub swarms: Option<Vec<Swarm>>,
    /// Weighted representation of `p_hat(x_T | Y_T)` before the last resampling.
    pub final_posterior: HomoskedasticGaussianMixture,
    pub elapsed_secs: f64,
}

impl FilterRun {
    pub fn final_posterior_mean(&self) -> &[f64] {
        &self.steps.last().expect("runs have at least one step").posterior_mean
    }
}

/// The filters provided by this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    Pspf,
    Sir,
    Enkf,
    MisePre,
    MisePost,
    Asir,
    Fasir,
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        FilterKind::Pspf,
        FilterKind::Sir,
        FilterKind::Enkf,
        FilterKind::MisePre,
        FilterKind::MisePost,
        FilterKind::Asir,
        FilterKind::Fasir,
    ];

    /// Whether a model with capabilities `caps` can be run by this filter.
    pub fn supported_by(&self, caps: &Capabilities) -> bool {
        match self {
            FilterKind::Pspf | FilterKind::Enkf | FilterKind::MisePre => caps.linear_observation,
            FilterKind::Sir | FilterKind::MisePost => true,
            FilterKind::Asir => caps.transition_mean,
            FilterKind::Fasir => caps.linear_observation && caps.gaussian_transition,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Pspf => "pspf",
            FilterKind::Sir => "sir",
            FilterKind::Enkf => "enkf",
            FilterKind::MisePre => "mise-pre",
            FilterKind::MisePost => "mise-post",
            FilterKind::Asir => "asir",
            FilterKind::Fasir => "fasir",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = PspfError;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| PspfError::InvalidArgument(format!("unknown filter `{s}`")))
    }
}

/// Runs the filter `kind`.
pub fn run_filter<M: StateSpaceModel + ?Sized>(
    kind: FilterKind,
    model: &M,
    obs: &[DVector<f64>],
    config: &FilterConfig,
) -> Result<FilterRun> {
    match kind {
        FilterKind::Pspf => run_pspf(model, obs, config),
        FilterKind::Sir => run_sir(model, obs, config),
        FilterKind::Enkf => run_enkf(model, obs, config),
        FilterKind::MisePre => run_mise_pre(model, obs, config),
        FilterKind::MisePost => run_mise_post(model, obs, config),
        FilterKind::Asir => run_asir(model, obs, config),
        FilterKind::Fasir => run_fasir(model, obs, config),
    }
}

fn check_inputs<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], n: usize, min_n: usize) -> Result<()> {
    if obs.is_empty() {
        return Err(PspfError::InvalidArgument("no observations".into()));
    }
    if n < min_n {
        return Err(PspfError::InsufficientSample {
            required: min_n,
            actual: n,
        });
    }
    if let Some(y) = obs.iter().find(|y| y.len() != model.dim_obs()) {
        return Err(PspfError::Shape(format!(
            "observation of length {} for a model with {} observed coordinates",
            y.len(),
            model.dim_obs()
        )));
    }
    Ok(())
}

fn linear_obs<M: StateSpaceModel + ?Sized>(model: &M, t: usize) -> Result<&LinearObservation> {
    model
        .linear_observation(t)
        .ok_or(PspfError::Unsupported("a linear Gaussian measurement"))
}

fn initial_swarm<M: StateSpaceModel + ?Sized>(model: &M, config: &FilterConfig) -> Swarm {
    let mut rng = config.stream(Purpose::Initial, 0);
    let mut s = Swarm::zeros(config.n, model.dim_state());
    for row in s.iter_mut() {
        model.sample_initial(&mut rng, row);
    }
    s
}

fn propagate<M: StateSpaceModel + ?Sized>(model: &M, prev: &Swarm, t: usize, config: &FilterConfig) -> Swarm {
    let mut rng = config.stream(Purpose::Propagate, t);
    let mut next = Swarm::zeros(prev.n(), prev.dim());
    for (p, out) in prev.iter().zip(next.iter_mut()) {
        model.transition(p, t, &mut rng, out);
    }
    next
}

fn resample(mix: &HomoskedasticGaussianMixture, config: &FilterConfig, t: usize) -> Result<(Swarm, Option<GridDiagnostics>)> {
    let mut rng = config.stream(Purpose::Resample, t);
    let r = match (config.resampler, mix.dim()) {
        (Resampler::Auto, 1) => Resampler::Continuous1d { grid: DEFAULT_GRID_1D },
        (Resampler::Auto, 2) => Resampler::Continuous2d {
            grid: [DEFAULT_GRID_2D; 2],
        },
        (r, _) => r,
    };
    match r {
        Resampler::Auto | Resampler::Direct | Resampler::Multinomial => Ok((sample_mixture_direct(mix, config.n, &mut rng)?, None)),
        Resampler::Continuous1d { grid } => {
            let (s, d) = resample_continuous_1d(mix, config.n, grid, &mut rng)?;
            Ok((s, Some(d)))
        }
        Resampler::Continuous2d { grid } => {
            let (s, d) = resample_continuous_2d(mix, config.n, grid, &mut rng)?;
            Ok((s, Some(d)))
        }
    }
}

fn mixture_mean(mix: &HomoskedasticGaussianMixture) -> Vec<f64> {
    let mut m = vec![0.0; mix.dim()];
    for (w, x) in mix.weights().iter().zip(mix.means().iter()) {
        for (mk, xk) in m.iter_mut().zip(x) {
            *mk += w * xk;
        }
    }
    m
}

fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

fn band(mix: &HomoskedasticGaussianMixture, coord: Option<usize>) -> Result<Option<[f64; 2]>> {
    match coord {
        None => Ok(None),
        Some(c) if c >= mix.dim() => Err(PspfError::InvalidArgument(format!("band coordinate {c} out of range"))),
        Some(c) => Ok(Some([mix.marginal_quantile(c, 0.025)?, mix.marginal_quantile(c, 0.975)?])),
    }
}

/// Accumulates per-step output.
struct Recorder {
    start: std::time::Instant,
    increments: Vec<f64>,
    b_trace: Vec<f64>,
    steps: Vec<StepRecord>,
    swarms: Option<Vec<Swarm>>,
}

impl Recorder {
    fn new(config: &FilterConfig, steps: usize) -> Self {
        Self {
            start: std::time::Instant::now(),
            increments: Vec::with_capacity(steps),
            b_trace: Vec::new(),
            steps: Vec::with_capacity(steps),
            swarms: config.store_swarms.then(Vec::new),
        }
    }

    fn push(&mut self, rec: StepRecord, swarm: &Swarm) {
        self.increments.push(rec.log_increment);
        if let Some(b) = rec.b {
            self.b_trace.push(b);
        }
        if let Some(s) = self.swarms.as_mut() {
            s.push(swarm.clone());
        }
        self.steps.push(rec);
    }

    fn finish(self, final_posterior: HomoskedasticGaussianMixture) -> FilterRun {
        FilterRun {
            loglik: self.increments.iter().sum(),
            increments: self.increments,
            b_trace: self.b_trace,
            steps: self.steps,
            swarms: self.swarms,
            final_posterior,
            elapsed_secs: self.start.elapsed().as_secs_f64(),
        }
    }
}
