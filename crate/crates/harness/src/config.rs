//! Declarative run configuration (TOML).
//!
//! ```toml
//! version = 1
//!
//! [model]
//! kind = "linear-mixture"   # or "squared-obs", "cev"
//! dim = 2
//! xi = 0.01
//!
//! [experiment]
//! steps = 10
//! replications = 200
//! seed = 1
//! reference = { kind = "exact" }
//!
//! [[experiment.filters]]
//! label = "pspf"
//! kind = "pspf"
//! n = 10000
//! options = { resampler = "direct" }
//! ```
//!
//! See the files under `configs/` for every section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pspf::augment::EVEN_SPLIT;
use pspf::bandwidth::BandwidthOptions;
use pspf::filters::{FilterConfig, FilterKind, Resampler, Smoothing};
use pspf::zoo::CevParams;

use crate::error::{invalid, HarnessError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub model: ModelSpec,
    pub simulate: Option<SimulateSpec>,
    pub experiment: Option<ExperimentSpec>,
    pub estimate: Option<EstimateSpec>,
    pub trace: Option<TraceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    LinearMixture {
        dim: usize,
        xi: f64,
    },
    SquaredObs {
        /// Share `r` of the measurement noise moved into the state by augmentation.
        #[serde(default = "even_split")]
        split: f64,
    },
    Cev {
        /// `(log alpha, log beta, log sigma, log gamma, log sigma_y)`.
        #[serde(default = "benchmark_theta")]
        theta: Vec<f64>,
    },
}

fn even_split() -> f64 {
    EVEN_SPLIT
}

fn benchmark_theta() -> Vec<f64> {
    CevParams::BENCHMARK_LOG.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub steps: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    pub threads: Option<usize>,
    pub reference: ReferenceSpec,
    /// Filter-distribution quantile levels compared with the reference.
    #[serde(default)]
    pub quantiles: Vec<f64>,
    pub filters: Vec<FilterSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Kalman filter over the initial mixture components.
    Exact,
    /// High-count SIR on the original model.
    Sir,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    #[serde(default = "reference_particles")]
    pub particles: usize,
}

fn reference_particles() -> usize {
    pspf::zoo::REFERENCE_SIR_PARTICLES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    Original,
    Augmented,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub label: String,
    pub kind: String,
    pub n: usize,
    /// Squared-observation model only. Defaults to augmented for filters that
    /// need a linear measurement and original otherwise.
    pub representation: Option<Representation>,
    #[serde(default)]
    pub options: FilterOptions,
}

impl FilterSpec {
    pub fn filter_kind(&self) -> Result<FilterKind> {
        self.kind
            .parse()
            .map_err(|_| invalid(format!("filter `{}`: unknown kind `{}`", self.label, self.kind)))
    }
}

/// Resampling, smoothing and bandwidth-selection settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterOptions {
    /// "auto", "direct", "multinomial", "continuous-1d" or "continuous-2d".
    pub resampler: Option<String>,
    /// Grid size(s) of the continuous resamplers.
    pub grid: Option<Vec<usize>>,
    /// "adaptive", "fixed" or "plug-in".
    pub smoothing: Option<String>,
    /// Smoothing parameter for `smoothing = "fixed"`.
    pub b: Option<f64>,
    /// Bandwidth multiplier of the plug-in rule.
    pub plugin_scale: Option<f64>,
    pub em_iters: Option<usize>,
    /// Particles used to fit the bias pilot; 0 uses all.
    pub pilot_subsample: Option<usize>,
    pub xatol: Option<f64>,
    pub max_evals: Option<usize>,
}

impl FilterOptions {
    pub fn filter_config(&self, n: usize, seed: u64) -> Result<FilterConfig> {
        let grid = |default: &[usize]| -> Vec<usize> { self.grid.clone().unwrap_or_else(|| default.to_vec()) };
        let resampler = match self.resampler.as_deref().unwrap_or("auto") {
            "auto" => Resampler::Auto,
            "direct" => Resampler::Direct,
            "multinomial" => Resampler::Multinomial,
            "continuous-1d" => match grid(&[pspf::resampling::DEFAULT_GRID_1D])[..] {
                [g] if g >= 2 => Resampler::Continuous1d { grid: g },
                _ => return Err(invalid("continuous-1d needs one grid size >= 2")),
            },
            "continuous-2d" => match grid(&[pspf::resampling::DEFAULT_GRID_2D; 2])[..] {
                [g1, g2] if g1 >= 2 && g2 >= 2 => Resampler::Continuous2d { grid: [g1, g2] },
                _ => return Err(invalid("continuous-2d needs two grid sizes >= 2")),
            },
            other => return Err(invalid(format!("unknown resampler `{other}`"))),
        };
        let smoothing = match self.smoothing.as_deref().unwrap_or("adaptive") {
            "adaptive" => Smoothing::Adaptive,
            "fixed" => {
                let b = self.b.ok_or_else(|| invalid("fixed smoothing needs `b`"))?;
                if !(0.0..=1.0).contains(&b) {
                    return Err(invalid(format!("b = {b} is outside [0, 1]")));
                }
                Smoothing::Fixed(b)
            }
            "plug-in" => {
                let scale = self.plugin_scale.unwrap_or(1.0);
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(invalid("plugin_scale must be positive"));
                }
                Smoothing::MisePlugIn { scale }
            }
            other => return Err(invalid(format!("unknown smoothing `{other}`"))),
        };
        let d = BandwidthOptions::default();
        let bandwidth = BandwidthOptions {
            em_iters: self.em_iters.unwrap_or(d.em_iters),
            pilot_subsample: match self.pilot_subsample {
                Some(0) => None,
                Some(k) => Some(k),
                None => d.pilot_subsample,
            },
            xatol: self.xatol.unwrap_or(d.xatol),
            max_evals: self.max_evals.unwrap_or(d.max_evals),
        };
        if bandwidth.em_iters == 0 || !(bandwidth.xatol > 0.0) || bandwidth.max_evals == 0 {
            return Err(invalid("em_iters, xatol and max_evals must be positive"));
        }
        let mut cfg = FilterConfig::new(n, seed).with_resampler(resampler).with_smoothing(smoothing);
        cfg.bandwidth = bandwidth;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    Pspf,
    Kalman,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSpec {
    pub steps: usize,
    /// Seed of the simulated data set.
    #[serde(default)]
    pub data_seed: u64,
    /// Number of filter seeds (estimation replicates on the same data).
    pub seeds: usize,
    /// Base filter seed.
    #[serde(default)]
    pub seed: u64,
    /// Starting point on the unconstrained scale; defaults to the data-generating value.
    pub theta0: Option<Vec<f64>>,
    pub method: EstimationMethod,
    #[serde(default = "estimate_particles")]
    pub particles: usize,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub fd_step: Option<f64>,
    pub hessian_step: Option<f64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub options: FilterOptions,
}

fn estimate_particles() -> usize {
    2048
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub particles: usize,
    #[serde(default)]
    pub seed: u64,
    /// State coordinate of the posterior band.
    #[serde(default)]
    pub band_coordinate: usize,
    #[serde(default)]
    pub options: FilterOptions,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        crate::models::ModelSet::build(&self.model)?;
        if let Some(s) = &self.simulate {
            if s.steps == 0 {
                return Err(invalid("simulate.steps must be at least 1"));
            }
        }
        if let Some(e) = &self.experiment {
            e.validate(&self.model)?;
        }
        if let Some(e) = &self.estimate {
            e.validate(&self.model)?;
        }
        if let Some(t) = &self.trace {
            if t.particles < 4 {
                return Err(invalid("trace.particles must be at least 4"));
            }
            t.options.filter_config(t.particles, t.seed)?;
        }
        Ok(())
    }
}

impl ExperimentSpec {
    fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("experiment.steps must be at least 1"));
        }
        if self.replications == 0 {
            return Err(invalid("experiment.replications must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("experiment.threads must be positive"));
        }
        if self.filters.is_empty() {
            return Err(invalid("experiment.filters is empty"));
        }
        if let Some(p) = self.quantiles.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(invalid(format!("quantile level {p} is outside (0, 1)")));
        }
        match (self.reference.kind, model) {
            (ReferenceKind::Exact, ModelSpec::LinearMixture { .. }) => {
                if !self.quantiles.is_empty() {
                    return Err(invalid("quantile metrics need the SIR reference"));
                }
            }
            (ReferenceKind::Exact, _) => return Err(invalid("the exact reference needs the linear mixture model")),
            (ReferenceKind::Sir, _) if self.reference.particles == 0 => {
                return Err(invalid("reference.particles must be positive"))
            }
            _ => {}
        }
        let models = crate::models::ModelSet::build(model)?;
        let mut labels = std::collections::BTreeSet::new();
        for f in &self.filters {
            if !labels.insert(f.label.as_str()) {
                return Err(invalid(format!("duplicate filter label `{}`", f.label)));
            }
            let kind = f.filter_kind()?;
            let min_n = match (kind, f.options.smoothing.as_deref()) {
                (FilterKind::Pspf, None | Some("adaptive")) => 4,
                (FilterKind::Pspf | FilterKind::Enkf | FilterKind::MisePre, _) => 2,
                _ => 1,
            };
            if f.n < min_n {
                return Err(invalid(format!("filter `{}` needs n >= {min_n}", f.label)));
            }
            f.options.filter_config(f.n, 0)?;
            let m = models.for_filter(kind, f.representation)?;
            if !kind.supported_by(&m.capabilities()) {
                return Err(invalid(format!("filter `{}` ({kind}) is not supported by this model", f.label)));
            }
        }
        Ok(())
    }
}

impl EstimateSpec {
    fn validate(&self, model: &ModelSpec) -> Result<()> {
        if self.steps == 0 || self.seeds == 0 {
            return Err(invalid("estimate.steps and estimate.seeds must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("estimate.threads must be positive"));
        }
        let truth = crate::estimate::true_theta(model)?;
        if let Some(t0) = &self.theta0 {
            if t0.len() != truth.len() {
                return Err(invalid(format!("theta0 has {} values, the model has {}", t0.len(), truth.len())));
            }
        }
        if self.method == EstimationMethod::Kalman && !matches!(model, ModelSpec::LinearMixture { .. }) {
            return Err(invalid("the kalman method needs the linear mixture model"));
        }
        if self.method == EstimationMethod::Pspf && self.particles < 4 {
            return Err(invalid("estimate.particles must be at least 4"));
        }
        self.options.filter_config(self.particles.max(4), self.seed)?;
        Ok(())
    }
}
