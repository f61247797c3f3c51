//! Experiment runner for the pre-smoothed particle filter library: simulated
//! data sets, replicated filter comparisons, simulated maximum likelihood and
//! smoothing-parameter traces, driven by TOML configuration files.

pub mod config;
pub mod data;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod models;
pub mod output;
pub mod stats;
pub mod trace;

use std::path::Path;

use serde::Serialize;

use pspf::model::simulate;
use pspf::rng::{stream_rng, Purpose};
use pspf::Trajectory;

pub use config::Config;
pub use error::{HarnessError, Result};

/// Simulates the `[simulate]` section of `cfg`.
pub fn run_simulate(cfg: &Config) -> Result<Trajectory> {
    let spec = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| error::invalid("the configuration has no [simulate] section"))?;
    let models = models::ModelSet::build(&cfg.model)?;
    Ok(simulate(models.original(), spec.steps, &mut stream_rng(spec.seed, Purpose::Simulate, 0))?)
}

#[derive(Serialize)]
struct DatasetMetadata<'a> {
    #[serde(flatten)]
    run: output::RunMetadata,
    model: &'a config::ModelSpec,
    steps: usize,
}

pub fn write_simulation(tr: &Trajectory, cfg: &Config, config_text: &str, out: &Path) -> Result<()> {
    let spec = cfg.simulate.as_ref().expect("simulation was run");
    data::write_dataset(out, tr)?;
    output::write_json(
        &output::sidecar_path(out),
        &DatasetMetadata {
            run: output::RunMetadata::new("simulate", config_text, spec.seed),
            model: &cfg.model,
            steps: spec.steps,
        },
    )
}
