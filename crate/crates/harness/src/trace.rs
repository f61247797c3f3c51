//! Per-step record of the selected smoothing parameter over a data set.

use std::path::Path;

use serde::Serialize;

use pspf::filters::{run_pspf, FilterKind, FilterRun};
use pspf::Trajectory;

use crate::config::Config;
use crate::error::{invalid, Result};
use crate::models::ModelSet;
use crate::output::{cell, sidecar_path, write_json, write_rows, RunMetadata};

pub fn run_trace(cfg: &Config, data: &Trajectory) -> Result<FilterRun> {
    let spec = cfg
        .trace
        .as_ref()
        .ok_or_else(|| invalid("the configuration has no [trace] section"))?;
    let models = ModelSet::build(&cfg.model)?;
    let model = models.for_filter(FilterKind::Pspf, None)?;
    if data.observations[0].len() != model.dim_obs() {
        return Err(invalid(format!(
            "data have {} observed coordinates, the model {}",
            data.observations[0].len(),
            model.dim_obs()
        )));
    }
    if spec.band_coordinate >= model.dim_state() {
        return Err(invalid("band_coordinate is out of range"));
    }
    let mut fc = spec.options.filter_config(spec.particles, spec.seed)?;
    fc.band_coordinate = Some(spec.band_coordinate);
    Ok(run_pspf(model, &data.observations, &fc)?)
}

#[derive(Serialize)]
struct TraceMetadata {
    #[serde(flatten)]
    run: RunMetadata,
    loglik: f64,
    criterion_note: &'static str,
}

/// Columns: `t`, `y_1..`, `b`, `log_criterion` (natural log of the
/// approximate MSE at `b`), `bias_share` (squared-bias fraction of it),
/// `band_lo`, `band_hi` (2.5% and 97.5% filter quantiles), `log_increment`,
/// `pilot`.
pub fn write_trace(run: &FilterRun, data: &Trajectory, cfg: &Config, config_text: &str, out: &Path) -> Result<()> {
    let spec = cfg.trace.as_ref().expect("trace was run");
    let dy = data.observations[0].len();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=dy).map(|k| format!("y_{k}")));
    header.extend(
        ["b", "log_criterion", "bias_share", "band_lo", "band_hi", "log_increment", "pilot"].map(String::from),
    );
    let rows: Vec<Vec<String>> = run
        .steps
        .iter()
        .zip(&data.observations)
        .map(|(s, y)| {
            let mut row = vec![s.t.to_string()];
            row.extend(y.iter().map(|v| cell(Some(*v))));
            let (log_c, share) = match &s.criterion {
                Some(c) if c.total() > 0.0 => (Some(c.total().ln() + 2.0 * c.log_scale), Some(c.bias_sq / c.total())),
                _ => (None, None),
            };
            row.extend([
                cell(s.b),
                cell(log_c),
                cell(share),
                cell(s.band.map(|b| b[0])),
                cell(s.band.map(|b| b[1])),
                cell(Some(s.log_increment)),
                s.pilot_status.map(|p| format!("{p:?}").to_lowercase()).unwrap_or_default(),
            ]);
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(out, &header_refs, &rows)?;
    write_json(
        &sidecar_path(out),
        &TraceMetadata {
            run: RunMetadata::new("bandwidth-trace", config_text, spec.seed),
            loglik: run.loglik,
            criterion_note: "log_criterion is the log of the approximate MSE of the likelihood increment at b",
        },
    )
}
