//! Bootstrap SIR and its post-smoothed variant.

use nalgebra::{DMatrix, DVector};

use super::pspf::scaled_plugin_b;
use super::{band, check_inputs, ess, initial_swarm, mixture_mean, propagate, resample, FilterConfig, FilterRun, Recorder, Resampler, Smoothing, StepRecord};
use crate::error::{PspfError, Result};
use crate::linalg::normalize_log_weights;
use crate::mixture::HomoskedasticGaussianMixture;
use crate::model::StateSpaceModel;
use crate::ps_update::ShrinkageParams;
use crate::swarm::{weighted_moments, Swarm};

/// `log p(y | x_i)` for every particle.
pub(crate) fn log_likelihoods<M: StateSpaceModel + ?Sized>(model: &M, prior: &Swarm, y: &[f64], t: usize) -> Vec<f64> {
    match model.linear_observation(t) {
        Some(lin) => {
            let mut scratch = vec![0.0; lin.dim_obs()];
            prior.iter().map(|x| lin.logpdf(y, x, &mut scratch)).collect()
        }
        None => prior.iter().map(|x| model.obs_logpdf(y, x, t)).collect(),
    }
}

/// Normalized weights and `log(n^-1 sum_i exp(log_w_i))`.
pub(crate) fn weigh(log_w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (w, lse) = normalize_log_weights(log_w).ok_or(PspfError::ZeroLikelihood)?;
    Ok((w, lse - (log_w.len() as f64).ln()))
}

#[derive(Clone, Copy)]
enum PostSmoothing {
    None,
    Kernel(Smoothing),
}

fn run_weighted<M: StateSpaceModel + ?Sized>(
    model: &M,
    obs: &[DVector<f64>],
    config: &FilterConfig,
    smoothing: PostSmoothing,
) -> Result<FilterRun> {
    check_inputs(model, obs, config.n, 1)?;
    let mut config = config.clone();
    if config.resampler == Resampler::Auto && matches!(smoothing, PostSmoothing::None) {
        config.resampler = Resampler::Multinomial;
    }
    let config = &config;
    let d = model.dim_state();
    let mut rec = Recorder::new(config, obs.len());
    let mut swarm = initial_swarm(model, config);
    let mut last = None;
    for (t, y) in (1..).zip(obs) {
        let step = || -> Result<_> {
            let prior = propagate(model, &swarm, t, config);
            let log_w = log_likelihoods(model, &prior, y.as_slice(), t);
            let (w, inc) = weigh(&log_w)?;
            let (posterior, b) = match smoothing {
                PostSmoothing::None => (HomoskedasticGaussianMixture::from_normalized(w, prior, DMatrix::zeros(d, d)), None),
                PostSmoothing::Kernel(s) => {
                    let b = match s {
                        Smoothing::Fixed(b) => ShrinkageParams::new(b)?.b,
                        Smoothing::MisePlugIn { scale } => scaled_plugin_b(prior.n(), d, scale)?,
                        Smoothing::Adaptive => scaled_plugin_b(prior.n(), d, 1.0)?,
                    };
                    (weighted_shrunk_kernel(w, prior, b)?, Some(b))
                }
            };
            let (next, grid) = resample(&posterior, config, t)?;
            let record = StepRecord {
                t,
                log_increment: inc,
                posterior_mean: mixture_mean(&posterior),
                b,
                criterion: None,
                pilot_status: None,
                ess: ess(posterior.weights()),
                band: band(&posterior, config.band_coordinate)?,
                grid,
            };
            Ok((record, next, posterior))
        };
        let (record, next, posterior) = step().map_err(|e| e.at_step(t))?;
        swarm = next;
        rec.push(record, &swarm);
        last = Some(posterior);
    }
    Ok(rec.finish(last.expect("at least one observation")))
}

/// Shrunk kernel estimate of a weighted sample: component means
/// `(1-b) mu_w + b x_i`, common covariance `(1-b^2) Sigma_w`, with the
/// weighted mean and covariance `mu_w`, `Sigma_w`.
fn weighted_shrunk_kernel(w: Vec<f64>, mut points: Swarm, b: f64) -> Result<HomoskedasticGaussianMixture> {
    let p = ShrinkageParams::new(b)?;
    let (mu, sigma) = weighted_moments(&points, Some(&w));
    for x in points.iter_mut() {
        for (xk, mk) in x.iter_mut().zip(mu.iter()) {
            *xk = p.a * mk + p.b * *xk;
        }
    }
    Ok(HomoskedasticGaussianMixture::from_normalized(w, points, sigma * p.g_prime))
}

/// Bootstrap SIR filter. The default resampler is multinomial.
pub fn run_sir<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    run_weighted(model, obs, config, PostSmoothing::None)
}

/// SIR update followed by shrunk-kernel smoothing of the weighted posterior.
/// `b` follows `config.smoothing`, where `Adaptive` falls back to the MISE
/// plug-in rule.
pub fn run_mise_post<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    run_weighted(model, obs, config, PostSmoothing::Kernel(config.smoothing))
}
