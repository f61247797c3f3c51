//! Exact likelihoods for linear Gaussian models.

use nalgebra::{DMatrix, DVector};

use crate::error::{PspfError, Result};
use crate::gaussian::GaussianFactor;
use crate::linalg::{logsumexp, symmetrize};
use crate::model::LinearGaussianSsm;

fn check_obs(model: &LinearGaussianSsm, obs: &[DVector<f64>]) -> Result<()> {
    let dy = model.observation().dim_obs();
    if let Some(y) = obs.iter().find(|y| y.len() != dy) {
        return Err(PspfError::Shape(format!(
            "observation has {} entries, model expects {dy}",
            y.len()
        )));
    }
    Ok(())
}

/// Per-step `log p(y_t | Y_{t-1})` from a Kalman pass started at `x_0 ~ N(mean0, cov0)`.
pub fn kalman_increments(
    model: &LinearGaussianSsm,
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    obs: &[DVector<f64>],
) -> Result<Vec<f64>> {
    check_obs(model, obs)?;
    let f = model.transition_matrix();
    let m_obs = model.observation().matrix();
    let r = model.observation().cov();
    let mut m = mean0.clone();
    let mut p = cov0.clone();
    let mut out = Vec::with_capacity(obs.len());
    for y in obs {
        m = f * &m + model.offset();
        p = f * &p * f.transpose() + model.state_cov();
        symmetrize(&mut p);
        let mut s = m_obs * &p * m_obs.transpose() + r;
        symmetrize(&mut s);
        let factor = GaussianFactor::new(&s, "innovation covariance")?;
        let v = y - m_obs * &m;
        out.push(factor.log_density_residual(v.as_slice()));
        let pmt = &p * m_obs.transpose();
        let gain = factor.solve(&pmt.transpose()).transpose();
        m += &gain * v;
        p -= &gain * m_obs * &p;
        symmetrize(&mut p);
    }
    Ok(out)
}

/// Exact `log p(Y_T)` for a model with a single Gaussian initial component.
pub fn kalman_loglik(model: &LinearGaussianSsm, obs: &[DVector<f64>]) -> Result<f64> {
    match model.initial() {
        [c] => Ok(kalman_increments(model, &c.mean, &c.cov, obs)?.iter().sum()),
        init => Err(PspfError::InvalidArgument(format!(
            "kalman_loglik needs a Gaussian initial law, model has {} components",
            init.len()
        ))),
    }
}

/// Exact `log p(Y_T)` for a Gaussian-mixture initial law: one Kalman pass per
/// component, combined as `log sum_k q_k p(Y_T | k)`.
pub fn kalman_mixture_loglik(model: &LinearGaussianSsm, obs: &[DVector<f64>]) -> Result<f64> {
    let terms = model
        .initial()
        .iter()
        .map(|c| {
            let ll: f64 = kalman_increments(model, &c.mean, &c.cov, obs)?.iter().sum();
            Ok(c.weight.ln() + ll)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(logsumexp(&terms))
}
