//! The pre-smoothed Bayes update.
//!
//! The prior sample is replaced by the shrunk kernel estimate
//! `pi_hat(x) = n^-1 sum_i N(x | m_i, G)` with `m_i = (1-b) mu + b x_i` and
//! `G = (1-b^2) Sigma`, whose mean and covariance equal the sample moments for
//! every `b`. Because all kernels share `G`, the update against a linear
//! Gaussian measurement is closed form and costs `O(n)` after a single
//! `d_y x d_y` factorization of `Sigma_eps + M G M^T`.

use nalgebra::{DMatrix, DVector};

use crate::error::{PspfError, Result};
use crate::gaussian::GaussianFactor;
use crate::linalg::{mat_vec, normalize_log_weights, sandwich, symmetrize};
use crate::mixture::HomoskedasticGaussianMixture;
use crate::model::LinearObservation;
use crate::swarm::Swarm;

/// The smoothing parameter `b` and the derived constants `a = 1 - b`, `G' = 1 - b^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkageParams {
    pub b: f64,
    pub a: f64,
    pub g_prime: f64,
}

impl ShrinkageParams {
    pub fn new(b: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&b) {
            return Err(PspfError::Domain {
                name: "smoothing parameter b",
                value: b,
                allowed: "[0, 1]",
            });
        }
        Ok(Self {
            b,
            a: 1.0 - b,
            g_prime: 1.0 - b * b,
        })
    }

    /// Conventional kernel bandwidth `h = sqrt(b^-2 - 1)` (infinite at `b = 0`).
    pub fn bandwidth(&self) -> f64 {
        (1.0 / (self.b * self.b) - 1.0).sqrt()
    }

    /// Inverse of [`bandwidth`](Self::bandwidth): `b = 1 / sqrt(1 + h^2)`.
    pub fn from_bandwidth(h: f64) -> Result<Self> {
        Self::new(1.0 / (1.0 + h * h).sqrt())
    }
}

/// Shrunk kernel estimate of the prior represented by `swarm`.
pub fn shrunk_kernel(swarm: &Swarm, b: f64) -> Result<HomoskedasticGaussianMixture> {
    let p = ShrinkageParams::new(b)?;
    let (mu, sigma) = swarm.moments()?;
    let mut means = swarm.clone();
    for m in means.iter_mut() {
        for (mk, muk) in m.iter_mut().zip(mu.iter()) {
            *mk = p.a * muk + p.b * *mk;
        }
    }
    HomoskedasticGaussianMixture::uniform(means, sigma * p.g_prime)
}

/// Output of [`ps_update`].
#[derive(Debug, Clone)]
pub struct PsUpdateResult {
    pub params: ShrinkageParams,
    /// `log p_hat(y) = log(n^-1 sum_i W_i)`.
    pub log_p_y: f64,
    /// `p_hat(y)`; may underflow to zero where `log_p_y` does not.
    pub p_y: f64,
    /// Posterior mixture with means `m_i + Q (y - M m_i)`, covariance
    /// `G - Q M G` and weights `w_i = W_i / (n p_hat(y))`.
    pub posterior: HomoskedasticGaussianMixture,
    /// `log W_i`.
    pub log_raw_weights: Vec<f64>,
    /// The gain `Q = G M^T (Sigma_eps + M G M^T)^-1`.
    pub gain: DMatrix<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: DMatrix<f64>,
}

impl PsUpdateResult {
    /// `W_i` in natural scale.
    pub fn raw_weights(&self) -> Vec<f64> {
        self.log_raw_weights.iter().map(|l| l.exp()).collect()
    }
}

/// Pre-smoothed update of the prior sample `swarm` against observation `y`.
pub fn ps_update(swarm: &Swarm, y: &[f64], obs: &LinearObservation, b: f64) -> Result<PsUpdateResult> {
    let moments = swarm.moments()?;
    ps_update_with_moments(swarm, moments, y, obs, b)
}

pub(crate) fn ps_update_with_moments(
    swarm: &Swarm,
    (mu, sigma): (DVector<f64>, DMatrix<f64>),
    y: &[f64],
    obs: &LinearObservation,
    b: f64,
) -> Result<PsUpdateResult> {
    let p = ShrinkageParams::new(b)?;
    let dx = swarm.dim();
    let dy = obs.dim_obs();
    if obs.dim_state() != dx || y.len() != dy {
        return Err(PspfError::Shape(format!(
            "swarm dimension {dx}, observation length {}, measurement matrix {}x{}",
            y.len(),
            obs.matrix().nrows(),
            obs.matrix().ncols()
        )));
    }
    let m = obs.matrix();
    let g = &sigma * p.g_prime;
    let s = obs.cov() + sandwich(m, &g);
    let factor = GaussianFactor::new(&s, "Sigma_eps + M G M^T")?;
    // Q^T = S^-1 M G
    let gain = factor.solve(&(m * &g)).transpose();
    let mut post_cov = &g - &gain * m * &g;
    symmetrize(&mut post_cov);

    let mut m_mu = vec![0.0; dy];
    mat_vec(m, mu.as_slice(), &mut m_mu);
    // y - (1-b) M mu
    let y0: Vec<f64> = y.iter().zip(&m_mu).map(|(yk, mk)| yk - p.a * mk).collect();

    let n = swarm.n();
    let mut log_w = Vec::with_capacity(n);
    let mut means = Swarm::zeros(n, dx);
    let mut mx = vec![0.0; dy];
    let mut resid = vec![0.0; dy];
    for (x, out) in swarm.iter().zip(means.iter_mut()) {
        mat_vec(m, x, &mut mx);
        for ((r, y0k), mxk) in resid.iter_mut().zip(&y0).zip(&mx) {
            *r = y0k - p.b * mxk;
        }
        log_w.push(factor.log_density_residual(&resid));
        for (k, o) in out.iter_mut().enumerate() {
            let mut v = p.a * mu[k] + p.b * x[k];
            for (j, r) in resid.iter().enumerate() {
                v += gain[(k, j)] * r;
            }
            *o = v;
        }
    }
    let Some((weights, lse)) = normalize_log_weights(&log_w) else {
        return Err(PspfError::ZeroLikelihood);
    };
    let log_p_y = lse - (n as f64).ln();
    Ok(PsUpdateResult {
        params: p,
        log_p_y,
        p_y: log_p_y.exp(),
        posterior: HomoskedasticGaussianMixture::from_normalized(weights, means, post_cov),
        log_raw_weights: log_w,
        gain,
        prior_mean: mu,
        prior_cov: sigma,
    })
}

/// Mean and covariance of the posterior mixture.
pub fn posterior_moments(result: &PsUpdateResult) -> (DVector<f64>, DMatrix<f64>) {
    result.posterior.moments()
}
