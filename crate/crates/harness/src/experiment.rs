//! Replicated filter comparisons against an exact or high-count reference.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use pspf::filters::{run_filter, run_sir, FilterConfig, FilterRun, Resampler};
use pspf::model::simulate;
use pspf::rng::{stream_rng, Purpose};
use pspf::zoo::exact_loglik;
use pspf::StateSpaceModel;

use crate::config::{Config, ExperimentSpec, ReferenceKind};
use crate::error::{invalid, Result};
use crate::models::ModelSet;
use crate::output::{cell, companion_path, sidecar_path, write_json, write_rows, RunMetadata};
use crate::stats::{root_mean, summarize_errors, STD_CONVENTION};

/// Seed for stream `b` of replication `a`, mixed with SplitMix64 so that
/// nearby indices give unrelated seeds.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(mix(base ^ mix(a)) ^ b)
}

const REFERENCE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Serialize)]
pub struct FilterOutcome {
    pub loglik: f64,
    /// Squared distance between the filter mean and the true final state.
    pub sq_dist: f64,
    pub quantiles: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Replication {
    pub index: usize,
    pub reference_loglik: f64,
    pub reference_quantiles: Vec<f64>,
    /// One entry per configured filter: the outcome or the failure message.
    pub filters: Vec<std::result::Result<FilterOutcome, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub filter: String,
    pub kind: String,
    pub n: usize,
    pub metric: String,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub replications: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterTiming {
    pub filter: String,
    pub mean_seconds: f64,
    /// Relative to the first configured filter.
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub replications: Vec<Replication>,
    pub timings: Vec<FilterTiming>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn metric(&self, filter: &str, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.filter == filter && r.metric == metric)
    }

    /// Per-replication errors `l_hat - l_ref` of a filter, failures skipped.
    pub fn loglik_errors(&self, filter: usize) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| r.filters[filter].as_ref().ok().map(|o| o.loglik - r.reference_loglik))
            .collect()
    }
}

fn final_quantiles(run: &FilterRun, levels: &[f64]) -> pspf::Result<Vec<f64>> {
    levels.iter().map(|&p| run.final_posterior.marginal_quantile(0, p)).collect()
}

fn run_one(models: &ModelSet, spec: &ExperimentSpec, r: usize) -> Result<Replication> {
    let original = models.original();
    let tr = simulate(original, spec.steps, &mut stream_rng(spec.seed, Purpose::Simulate, r as u64))?;
    let obs = &tr.observations;
    let truth = tr.states.particle(tr.states.n() - 1);
    let (reference_loglik, reference_quantiles) = match (spec.reference.kind, models) {
        (ReferenceKind::Exact, ModelSet::LinearMixture(m)) => (exact_loglik(m, obs)?, Vec::new()),
        (ReferenceKind::Exact, _) => return Err(invalid("the exact reference needs the linear mixture model")),
        (ReferenceKind::Sir, _) => {
            let seed = derive_seed(spec.seed, r as u64, REFERENCE_STREAM);
            let cfg = FilterConfig::new(spec.reference.particles, seed).with_resampler(Resampler::Multinomial);
            let run = run_sir(original, obs, &cfg)?;
            (run.loglik, final_quantiles(&run, &spec.quantiles)?)
        }
    };
    let filters = spec
        .filters
        .iter()
        .enumerate()
        .map(|(j, f)| -> std::result::Result<FilterOutcome, String> {
            let kind = f.filter_kind().map_err(|e| e.to_string())?;
            let model: &dyn StateSpaceModel = models.for_filter(kind, f.representation).map_err(|e| e.to_string())?;
            let cfg = f
                .options
                .filter_config(f.n, derive_seed(spec.seed, r as u64, j as u64))
                .map_err(|e| e.to_string())?;
            let start = Instant::now();
            let run = run_filter(kind, model, obs, &cfg).map_err(|e| e.to_string())?;
            let seconds = start.elapsed().as_secs_f64();
            let mean = run.final_posterior_mean();
            let sq_dist = truth.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(FilterOutcome {
                loglik: run.loglik,
                sq_dist,
                quantiles: final_quantiles(&run, &spec.quantiles).map_err(|e| e.to_string())?,
                seconds,
            })
        })
        .collect();
    Ok(Replication {
        index: r,
        reference_loglik,
        reference_quantiles,
        filters,
    })
}

/// Runs the `[experiment]` section of `cfg`.
pub fn run_experiment(cfg: &Config) -> Result<ExperimentReport> {
    let spec = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| invalid("the configuration has no [experiment] section"))?;
    let models = ModelSet::build(&cfg.model)?;
    let start = Instant::now();
    let work = || -> Result<Vec<Replication>> {
        (0..spec.replications)
            .into_par_iter()
            .map(|r| run_one(&models, spec, r))
            .collect()
    };
    let replications = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let rows = aggregate(spec, &replications);
    let timings = timings(spec, &replications);
    Ok(ExperimentReport {
        rows,
        replications,
        timings,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn aggregate(spec: &ExperimentSpec, reps: &[Replication]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for (j, f) in spec.filters.iter().enumerate() {
        let ok: Vec<(&Replication, &FilterOutcome)> = reps
            .iter()
            .filter_map(|r| r.filters[j].as_ref().ok().map(|o| (r, o)))
            .collect();
        let failures = reps.len() - ok.len();
        let mut push = |metric: String, value: Option<f64>, se: Option<f64>| {
            rows.push(MetricRow {
                filter: f.label.clone(),
                kind: f.kind.clone(),
                n: f.n,
                metric,
                value,
                se,
                replications: ok.len(),
                failures,
            })
        };
        let ll: Vec<f64> = ok.iter().map(|(r, o)| o.loglik - r.reference_loglik).collect();
        let s = summarize_errors(&ll);
        push("loglik_bias".into(), s.map(|s| s.bias), s.and_then(|s| s.bias_se));
        push("loglik_std".into(), s.and_then(|s| s.std), s.and_then(|s| s.std_se));
        push("loglik_rmse".into(), s.map(|s| s.rmse), s.and_then(|s| s.rmse_se));
        let d: Vec<f64> = ok.iter().map(|(_, o)| o.sq_dist).collect();
        let fr = root_mean(&d);
        push("filter_rmse".into(), fr.map(|v| v.0), fr.and_then(|v| v.1));
        for (k, p) in spec.quantiles.iter().enumerate() {
            let q: Vec<f64> = ok
                .iter()
                .map(|(r, o)| o.quantiles[k] - r.reference_quantiles[k])
                .collect();
            let s = summarize_errors(&q);
            push(format!("q{p}_bias"), s.map(|s| s.bias), s.and_then(|s| s.bias_se));
            push(format!("q{p}_std"), s.and_then(|s| s.std), s.and_then(|s| s.std_se));
        }
    }
    rows
}

fn timings(spec: &ExperimentSpec, reps: &[Replication]) -> Vec<FilterTiming> {
    let means: Vec<f64> = (0..spec.filters.len())
        .map(|j| {
            let t: Vec<f64> = reps.iter().filter_map(|r| r.filters[j].as_ref().ok().map(|o| o.seconds)).collect();
            if t.is_empty() {
                f64::NAN
            } else {
                t.iter().sum::<f64>() / t.len() as f64
            }
        })
        .collect();
    spec.filters
        .iter()
        .zip(&means)
        .map(|(f, &m)| FilterTiming {
            filter: f.label.clone(),
            mean_seconds: m,
            relative: m / means[0],
        })
        .collect()
}

#[derive(Serialize)]
struct Failure<'a> {
    replication: usize,
    filter: &'a str,
    error: &'a str,
}

#[derive(Serialize)]
struct ExperimentMetadata<'a> {
    #[serde(flatten)]
    run: RunMetadata,
    std_convention: &'static str,
    replications: usize,
    steps: usize,
    reference: &'a crate::config::ReferenceSpec,
    failures: Vec<Failure<'a>>,
    timings: &'a [FilterTiming],
    wall_clock_secs: f64,
}

/// Writes the summary CSV at `out`, per-replication values next to it
/// (`<stem>_replications.csv`) and the JSON sidecar (`<stem>.json`).
/// Timings appear only in the sidecar, so both CSV files are reproducible.
pub fn write_experiment(report: &ExperimentReport, cfg: &Config, config_text: &str, out: &Path) -> Result<()> {
    let spec = cfg.experiment.as_ref().expect("experiment was run");
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.filter.clone(),
                r.kind.clone(),
                r.n.to_string(),
                r.metric.clone(),
                cell(r.value),
                cell(r.se),
                r.replications.to_string(),
                r.failures.to_string(),
            ]
        })
        .collect();
    write_rows(
        out,
        &["filter", "kind", "n", "metric", "value", "se", "replications", "failures"],
        &rows,
    )?;

    let mut header: Vec<String> = ["replication", "filter", "loglik", "reference_loglik", "loglik_error", "sq_dist"]
        .map(String::from)
        .to_vec();
    header.extend(spec.quantiles.iter().map(|p| format!("q{p}_error")));
    header.push("failure".into());
    let mut per_rep = Vec::new();
    for r in &report.replications {
        for (f, o) in spec.filters.iter().zip(&r.filters) {
            let mut row = vec![r.index.to_string(), f.label.clone()];
            match o {
                Ok(o) => {
                    row.extend([
                        cell(Some(o.loglik)),
                        cell(Some(r.reference_loglik)),
                        cell(Some(o.loglik - r.reference_loglik)),
                        cell(Some(o.sq_dist)),
                    ]);
                    row.extend(o.quantiles.iter().zip(&r.reference_quantiles).map(|(a, b)| cell(Some(a - b))));
                    row.push(String::new());
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 4 + spec.quantiles.len()));
                    row.push(e.clone());
                }
            }
            per_rep.push(row);
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(&companion_path(out, "replications"), &header_refs, &per_rep)?;

    let failures = report
        .replications
        .iter()
        .flat_map(|r| {
            spec.filters.iter().zip(&r.filters).filter_map(move |(f, o)| {
                o.as_ref().err().map(|e| Failure {
                    replication: r.index,
                    filter: &f.label,
                    error: e,
                })
            })
        })
        .collect();
    let meta = ExperimentMetadata {
        run: RunMetadata::new("experiment", config_text, spec.seed),
        std_convention: STD_CONVENTION,
        replications: spec.replications,
        steps: spec.steps,
        reference: &spec.reference,
        failures,
        timings: &report.timings,
        wall_clock_secs: report.wall_clock_secs,
    };
    write_json(&sidecar_path(out), &meta)
}
