use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PspfError, Result};
use crate::filters::ModelFamily;
use crate::kalman::kalman_mixture_loglik;
use crate::model::{Capabilities, InitialComponent, LinearGaussianSsm, LinearObservation, StateSpaceModel};
use crate::rng::StreamRng;

/// `x_t = 0.95 x_{t-1} + N(0, 0.1 * ones + 0.2 I)`, `y_t = x_t + N(0, xi^2 I)`,
/// with `x_0` an equal-weight mixture of `N(0, I)`, `N(1, I)` and
/// `N([-1, 1, -1, ...], I)`.
///
/// With `xi = 0` the observations equal the states; the model can then be
/// simulated but has no linear Gaussian measurement.
#[derive(Debug, Clone)]
pub struct LinearMixtureModel {
    dim: usize,
    xi: f64,
    inner: LinearGaussianSsm,
}

impl LinearMixtureModel {
    pub const PERSISTENCE: f64 = 0.95;

    pub fn new(dim: usize, xi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(PspfError::InvalidArgument("dimension must be positive".into()));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(PspfError::Domain {
                name: "observation noise scale",
                value: xi,
                allowed: "[0, inf)",
            });
        }
        let eye = DMatrix::<f64>::identity(dim, dim);
        let state_cov = DMatrix::from_element(dim, dim, 0.1) + &eye * 0.2;
        let obs_var = if xi > 0.0 { xi * xi } else { 1.0 };
        let obs = LinearObservation::new(eye.clone(), &eye * obs_var)?;
        let alternating = DVector::from_fn(dim, |i, _| if i % 2 == 0 { -1.0 } else { 1.0 });
        let initial = [DVector::zeros(dim), DVector::from_element(dim, 1.0), alternating]
            .into_iter()
            .map(|mean| InitialComponent {
                weight: 1.0 / 3.0,
                mean,
                cov: eye.clone(),
            })
            .collect();
        let inner = LinearGaussianSsm::new(&eye * Self::PERSISTENCE, DVector::zeros(dim), state_cov, obs, initial)?;
        Ok(Self { dim, xi, inner })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    /// The linear Gaussian form; `None` when `xi = 0`.
    pub fn linear_gaussian(&self) -> Option<&LinearGaussianSsm> {
        (self.xi > 0.0).then_some(&self.inner)
    }
}

impl StateSpaceModel for LinearMixtureModel {
    fn dim_state(&self) -> usize {
        self.dim
    }

    fn dim_obs(&self) -> usize {
        self.dim
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        self.inner.sample_initial(rng, out)
    }

    fn transition(&self, prev: &[f64], t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        self.inner.transition(prev, t, rng, out)
    }

    fn linear_observation(&self, t: usize) -> Option<&LinearObservation> {
        self.linear_gaussian().and_then(|m| m.linear_observation(t))
    }

    fn obs_logpdf(&self, y: &[f64], x: &[f64], t: usize) -> f64 {
        match self.linear_gaussian() {
            Some(m) => m.obs_logpdf(y, x, t),
            None if y == x => f64::INFINITY,
            None => f64::NEG_INFINITY,
        }
    }

    fn sample_obs(&self, x: &[f64], _t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        for (o, xk) in out.iter_mut().zip(x) {
            let z: f64 = StandardNormal.sample(rng);
            *o = xk + self.xi * z;
        }
    }

    fn transition_mean(&self, prev: &[f64], t: usize, mean: &mut [f64]) -> bool {
        self.inner.transition_mean(prev, t, mean)
    }

    fn transition_gaussian(&self, prev: &[f64], t: usize, mean: &mut [f64], cov: &mut DMatrix<f64>) -> bool {
        self.inner.transition_gaussian(prev, t, mean, cov)
    }

    fn as_linear_gaussian(&self) -> Option<&LinearGaussianSsm> {
        self.linear_gaussian()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            linear_observation: self.xi > 0.0,
            transition_mean: true,
            gaussian_transition: true,
        }
    }
}

/// Exact `log p(Y_T)` of the linear mixture model.
pub fn exact_loglik(model: &LinearMixtureModel, obs: &[DVector<f64>]) -> Result<f64> {
    let lg = model
        .linear_gaussian()
        .ok_or(PspfError::Unsupported("a positive observation noise"))?;
    kalman_mixture_loglik(lg, obs)
}

/// Linear mixture models of a fixed dimension indexed by `log xi`.
#[derive(Debug, Clone, Copy)]
pub struct LinearMixtureFamily {
    pub dim: usize,
}

impl ModelFamily for LinearMixtureFamily {
    fn parameter_names(&self) -> Vec<String> {
        vec!["log_xi".into()]
    }

    fn build(&self, theta: &[f64]) -> Result<Box<dyn StateSpaceModel>> {
        let [log_xi] = theta else {
            return Err(PspfError::Shape(format!("{} values for 1 parameter", theta.len())));
        };
        Ok(Box::new(LinearMixtureModel::new(self.dim, log_xi.exp())?))
    }
}
