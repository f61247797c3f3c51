//! Simulated maximum likelihood on one simulated data set, replicated over
//! filter seeds.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use pspf::filters::{estimate_sml, LikelihoodMethod, ModelFamily, SmlOptions};
use pspf::model::simulate;
use pspf::rng::{stream_rng, Purpose};
use pspf::zoo::{CevFamily, LinearMixtureFamily};

use crate::config::{Config, EstimationMethod, ModelSpec};
use crate::error::{invalid, Result};
use crate::experiment::derive_seed;
use crate::models::ModelSet;
use crate::output::{cell, companion_path, sidecar_path, write_json, write_rows, RunMetadata};
use crate::stats::sample_std;

/// Data-generating parameters on the estimation scale.
pub fn true_theta(model: &ModelSpec) -> Result<Vec<f64>> {
    match model {
        ModelSpec::Cev { theta } => Ok(theta.clone()),
        ModelSpec::LinearMixture { xi, .. } if *xi > 0.0 => Ok(vec![xi.ln()]),
        ModelSpec::LinearMixture { .. } => Err(invalid("estimation needs xi > 0")),
        ModelSpec::SquaredObs { .. } => Err(invalid("the squared-observation model has no estimation family")),
    }
}

fn family(model: &ModelSpec) -> Result<Box<dyn ModelFamily>> {
    match model {
        ModelSpec::Cev { .. } => Ok(Box::new(CevFamily)),
        ModelSpec::LinearMixture { dim, .. } => Ok(Box::new(LinearMixtureFamily { dim: *dim })),
        ModelSpec::SquaredObs { .. } => Err(invalid("the squared-observation model has no estimation family")),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedEstimate {
    pub seed_index: usize,
    pub theta: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub start: f64,
    pub mean_estimate: f64,
    /// Mean over seeds of the statistical standard errors.
    pub statistical_se: Option<f64>,
    /// Standard deviation of the estimates across seeds (divisor `S - 1`).
    pub mc_se: Option<f64>,
}

impl ParameterSummary {
    /// `|mean estimate - truth|` in statistical standard errors.
    pub fn error_in_se(&self) -> Option<f64> {
        self.statistical_se.map(|se| (self.mean_estimate - self.truth).abs() / se)
    }

    pub fn mc_ratio(&self) -> Option<f64> {
        Some(self.mc_se? / self.statistical_se?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimationReport {
    pub parameters: Vec<ParameterSummary>,
    pub seeds: Vec<std::result::Result<SeedEstimate, String>>,
    pub wall_clock_secs: f64,
}

pub fn run_estimate(cfg: &Config) -> Result<EstimationReport> {
    let spec = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| invalid("the configuration has no [estimate] section"))?;
    let truth = true_theta(&cfg.model)?;
    let fam = family(&cfg.model)?;
    let models = ModelSet::build(&cfg.model)?;
    let data = simulate(models.original(), spec.steps, &mut stream_rng(spec.data_seed, Purpose::Simulate, 0))?;
    let theta0 = spec.theta0.clone().unwrap_or_else(|| truth.clone());
    let start = Instant::now();
    let one = |s: usize| -> std::result::Result<SeedEstimate, String> {
        let method = match spec.method {
            EstimationMethod::Kalman => LikelihoodMethod::Kalman,
            EstimationMethod::Pspf => {
                let seed = derive_seed(spec.seed, s as u64, 0);
                LikelihoodMethod::Pspf(spec.options.filter_config(spec.particles, seed).map_err(|e| e.to_string())?)
            }
        };
        let mut opts = SmlOptions::new(method);
        if let Some(v) = spec.max_iters {
            opts.optimizer.max_iters = v;
        }
        if let Some(v) = spec.grad_tol {
            opts.optimizer.grad_tol = v;
        }
        if let Some(v) = spec.fd_step {
            opts.optimizer.fd_step = v;
        }
        if let Some(v) = spec.hessian_step {
            opts.hessian_step = v;
        }
        let fit = estimate_sml(fam.as_ref(), &data.observations, &theta0, &opts).map_err(|e| e.to_string())?;
        Ok(SeedEstimate {
            seed_index: s,
            theta: fit.theta,
            std_errors: fit.std_errors,
            loglik: fit.loglik,
            iterations: fit.iterations,
            evaluations: fit.trace.len(),
            converged: fit.converged,
        })
    };
    let work = || (0..spec.seeds).into_par_iter().map(one).collect::<Vec<_>>();
    let seeds = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let ok: Vec<&SeedEstimate> = seeds.iter().filter_map(|s| s.as_ref().ok()).collect();
    if ok.is_empty() {
        let first = seeds.iter().find_map(|s| s.as_ref().err()).cloned().unwrap_or_default();
        return Err(pspf::PspfError::InvalidArgument(format!("every estimation replicate failed: {first}")).into());
    }
    let parameters = fam
        .parameter_names()
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let est: Vec<f64> = ok.iter().map(|s| s.theta[k]).collect();
            let ses: Vec<f64> = ok.iter().filter_map(|s| s.std_errors.as_ref().map(|v| v[k])).collect();
            ParameterSummary {
                name,
                truth: truth[k],
                start: theta0[k],
                mean_estimate: est.iter().sum::<f64>() / est.len() as f64,
                statistical_se: (!ses.is_empty()).then(|| ses.iter().sum::<f64>() / ses.len() as f64),
                mc_se: sample_std(&est),
            }
        })
        .collect();
    Ok(EstimationReport {
        parameters,
        seeds,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Serialize)]
struct EstimateMetadata<'a> {
    #[serde(flatten)]
    run: RunMetadata,
    data_seed: u64,
    seeds: usize,
    mc_se_convention: &'static str,
    failures: Vec<(usize, &'a str)>,
    wall_clock_secs: f64,
}

/// Writes the parameter table at `out`, per-seed estimates to
/// `<stem>_seeds.csv` and the JSON sidecar.
pub fn write_estimate(report: &EstimationReport, cfg: &Config, config_text: &str, out: &Path) -> Result<()> {
    let spec = cfg.estimate.as_ref().expect("estimation was run");
    let rows: Vec<Vec<String>> = report
        .parameters
        .iter()
        .map(|p| {
            vec![
                p.name.clone(),
                cell(Some(p.truth)),
                cell(Some(p.start)),
                cell(Some(p.mean_estimate)),
                cell(p.statistical_se),
                cell(p.mc_se),
                cell(p.error_in_se()),
                cell(p.mc_ratio()),
            ]
        })
        .collect();
    write_rows(
        out,
        &["parameter", "truth", "start", "mean_estimate", "statistical_se", "mc_se", "error_in_se", "mc_se_ratio"],
        &rows,
    )?;
    let names: Vec<String> = report.parameters.iter().map(|p| p.name.clone()).collect();
    let mut header = vec!["seed".to_string()];
    header.extend(names.iter().cloned());
    header.extend(names.iter().map(|n| format!("se_{n}")));
    header.extend(["loglik", "iterations", "evaluations", "converged", "failure"].map(String::from));
    let seed_rows: Vec<Vec<String>> = report
        .seeds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![i.to_string()];
            match s {
                Ok(s) => {
                    row.extend(s.theta.iter().map(|v| cell(Some(*v))));
                    match &s.std_errors {
                        Some(se) => row.extend(se.iter().map(|v| cell(Some(*v)))),
                        None => row.extend(std::iter::repeat_n(String::new(), names.len())),
                    }
                    row.extend([
                        cell(Some(s.loglik)),
                        s.iterations.to_string(),
                        s.evaluations.to_string(),
                        s.converged.to_string(),
                        String::new(),
                    ]);
                }
                Err(e) => {
                    row.extend(std::iter::repeat_n(String::new(), 2 * names.len() + 4));
                    row.push(e.clone());
                }
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(&companion_path(out, "seeds"), &header_refs, &seed_rows)?;
    let meta = EstimateMetadata {
        run: RunMetadata::new("estimate", config_text, spec.seed),
        data_seed: spec.data_seed,
        seeds: spec.seeds,
        mc_se_convention: "sample standard deviation of the estimates across seeds (divisor S - 1)",
        failures: report
            .seeds
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().err().map(|e| (i, e.as_str())))
            .collect(),
        wall_clock_secs: report.wall_clock_secs,
    };
    write_json(&sidecar_path(out), &meta)
}
