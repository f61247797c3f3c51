//! Auxiliary particle filters: ASIR with first-stage weights from the
//! likelihood at the transition mean, and the fully adapted FASIR.
//!
//! Both follow the usual two-stage construction. First-stage indices are
//! drawn multinomially on the `Auxiliary` stream, the new particles on the
//! `Propagate` stream.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::sir::weigh;
use super::{band, check_inputs, ess, initial_swarm, linear_obs, mixture_mean, FilterConfig, FilterRun, Recorder, StepRecord};
use crate::error::{PspfError, Result};
use crate::gaussian::GaussianFactor;
use crate::linalg::{mat_vec, psd_sqrt, sandwich, symmetrize};
use crate::mixture::HomoskedasticGaussianMixture;
use crate::model::StateSpaceModel;
use crate::resampling::{multinomial_indices, resample_multinomial};
use crate::rng::Purpose;
use crate::swarm::Swarm;

/// ASIR. The increment is `log(n^-1 sum_k lambda_k) + log(n^-1 sum_j w_j)`
/// with first-stage weights `lambda_k = p(y | E[x_t | x_{t-1}^k])` and
/// second-stage weights `w_j = p(y | x_j) / lambda_{k_j}`.
pub fn run_asir<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    check_inputs(model, obs, config.n, 1)?;
    let n = config.n;
    let d = model.dim_state();
    let mut rec = Recorder::new(config, obs.len());
    let mut swarm = initial_swarm(model, config);
    let mut last = None;
    for (t, y) in (1..).zip(obs) {
        let step = || -> Result<_> {
            let y = y.as_slice();
            let mut centers = Swarm::zeros(n, d);
            for (x, c) in swarm.iter().zip(centers.iter_mut()) {
                if !model.transition_mean(x, t, c) {
                    return Err(PspfError::Unsupported("the conditional mean of the transition"));
                }
            }
            let log_lambda: Vec<f64> = centers.iter().map(|c| model.obs_logpdf(y, c, t)).collect();
            let (lambda, inc1) = weigh(&log_lambda)?;
            let idx = multinomial_indices(&lambda, n, &mut config.stream(Purpose::Auxiliary, t))?;
            let mut rng = config.stream(Purpose::Propagate, t);
            let mut prior = Swarm::zeros(n, d);
            for (&k, out) in idx.iter().zip(prior.iter_mut()) {
                model.transition(swarm.particle(k), t, &mut rng, out);
            }
            let log_w: Vec<f64> = prior
                .iter()
                .zip(&idx)
                .map(|(x, &k)| model.obs_logpdf(y, x, t) - log_lambda[k])
                .collect();
            let (w, inc2) = weigh(&log_w)?;
            let next = resample_multinomial(&w, &prior, n, &mut config.stream(Purpose::Resample, t))?;
            let posterior = HomoskedasticGaussianMixture::from_normalized(w, prior, DMatrix::zeros(d, d));
            let record = StepRecord {
                t,
                log_increment: inc1 + inc2,
                posterior_mean: mixture_mean(&posterior),
                b: None,
                criterion: None,
                pilot_status: None,
                ess: ess(posterior.weights()),
                band: band(&posterior, config.band_coordinate)?,
                grid: None,
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

/// Exact one-step predictive and posterior of a Gaussian transition
/// `N(m, Q)` under the linear Gaussian measurement.
struct Adapted {
    cov: DMatrix<f64>,
    factor: GaussianFactor,
    gain: DMatrix<f64>,
    post_sqrt: DMatrix<f64>,
    post_cov: DMatrix<f64>,
}

impl Adapted {
    fn new(q: &DMatrix<f64>, m: &DMatrix<f64>, eps: &DMatrix<f64>) -> Result<Self> {
        let s = eps + sandwich(m, q);
        let factor = GaussianFactor::new(&s, "Sigma_eps + M Q M^T")?;
        let gain = factor.solve(&(m * q)).transpose();
        let mut post_cov = q - &gain * m * q;
        symmetrize(&mut post_cov);
        Ok(Self {
            cov: q.clone(),
            factor,
            gain,
            post_sqrt: psd_sqrt(&post_cov),
            post_cov,
        })
    }
}

/// FASIR. First-stage weights are the exact predictive densities
/// `N(y | M m_k, Sigma_eps + M Q_k M^T)` of the Gaussian transition
/// `N(m_k, Q_k)`, the new particles are drawn from the exact conditional
/// posteriors, and the increment is `log(n^-1 sum_k lambda_k)`.
///
/// The reported posterior is the mixture of the conditional posteriors when
/// `Q_k` is the same for every particle, and the equally weighted new
/// particles otherwise.
pub fn run_fasir<M: StateSpaceModel + ?Sized>(model: &M, obs: &[DVector<f64>], config: &FilterConfig) -> Result<FilterRun> {
    check_inputs(model, obs, config.n, 1)?;
    let n = config.n;
    let d = model.dim_state();
    let mut rec = Recorder::new(config, obs.len());
    let mut swarm = initial_swarm(model, config);
    let mut last = None;
    let mut cache: Option<Adapted> = None;
    for (t, y) in (1..).zip(obs) {
        let mut step = || -> Result<_> {
            let y = y.as_slice();
            let lin = linear_obs(model, t)?;
            let dy = lin.dim_obs();
            let mut q = DMatrix::zeros(d, d);
            let mut log_lambda = Vec::with_capacity(n);
            let mut post_means = Swarm::zeros(n, d);
            // runs of equal transition covariances share one factorization
            let mut which = Vec::with_capacity(n);
            let mut adapted: Vec<Adapted> = Vec::new();
            let mut mm = vec![0.0; dy];
            let mut resid = vec![0.0; dy];
            for (x, pm) in swarm.iter().zip(post_means.iter_mut()) {
                let mut mean = vec![0.0; d];
                if !model.transition_gaussian(x, t, &mut mean, &mut q) {
                    return Err(PspfError::Unsupported("a Gaussian transition"));
                }
                if !adapted.last().is_some_and(|a| a.cov == q) {
                    let fresh = match cache.take() {
                        Some(c) if c.cov == q => c,
                        _ => Adapted::new(&q, lin.matrix(), lin.cov())?,
                    };
                    adapted.push(fresh);
                }
                let a = adapted.len() - 1;
                which.push(a);
                let ad = &adapted[a];
                mat_vec(lin.matrix(), &mean, &mut mm);
                for ((r, yk), mk) in resid.iter_mut().zip(y).zip(&mm) {
                    *r = yk - mk;
                }
                log_lambda.push(ad.factor.log_density_residual(&resid));
                for (k, o) in pm.iter_mut().enumerate() {
                    *o = mean[k] + (0..dy).map(|j| ad.gain[(k, j)] * resid[j]).sum::<f64>();
                }
            }
            let (lambda, inc) = weigh(&log_lambda)?;
            let idx = multinomial_indices(&lambda, n, &mut config.stream(Purpose::Auxiliary, t))?;
            let mut rng = config.stream(Purpose::Propagate, t);
            let mut next = Swarm::zeros(n, d);
            let mut z = vec![0.0; d];
            let mut e = vec![0.0; d];
            for (&k, out) in idx.iter().zip(next.iter_mut()) {
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                mat_vec(&adapted[which[k]].post_sqrt, &z, &mut e);
                for ((o, m), ek) in out.iter_mut().zip(post_means.particle(k)).zip(&e) {
                    *o = m + ek;
                }
            }
            let posterior = if adapted.len() == 1 {
                HomoskedasticGaussianMixture::from_normalized(lambda, post_means, adapted[0].post_cov.clone())
            } else {
                let mean_rb = mixture_mean(&HomoskedasticGaussianMixture::from_normalized(
                    lambda,
                    post_means,
                    DMatrix::zeros(d, d),
                ));
                let p = HomoskedasticGaussianMixture::uniform(next.clone(), DMatrix::zeros(d, d))?;
                return Ok((inc, mean_rb, next, p, adapted.pop()));
            };
            let mean_rb = mixture_mean(&posterior);
            Ok((inc, mean_rb, next, posterior, adapted.pop()))
        };
        let (inc, mean_rb, next, posterior, keep) = step().map_err(|e| e.at_step(t))?;
        cache = keep;
        let record = StepRecord {
            t,
            log_increment: inc,
            posterior_mean: mean_rb,
            b: None,
            criterion: None,
            pilot_status: None,
            ess: ess(posterior.weights()),
            band: band(&posterior, config.band_coordinate).map_err(|e| e.at_step(t))?,
            grid: None,
        };
        swarm = next;
        rec.push(record, &swarm);
        last = Some(posterior);
    }
    Ok(rec.finish(last.expect("at least one observation")))
}
