//! Simulated maximum likelihood.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use super::{run_pspf, FilterConfig};
use crate::error::{PspfError, Result};
use crate::kalman::kalman_mixture_loglik;
use crate::minimize::{minimize_quasi_newton, numerical_hessian, QuasiNewtonOptions};
use crate::model::StateSpaceModel;

/// Parametric family of state-space models on an unconstrained scale.
pub trait ModelFamily: Sync {
    fn parameter_names(&self) -> Vec<String>;

    fn build(&self, theta: &[f64]) -> Result<Box<dyn StateSpaceModel>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodMethod {
    /// PSPF with a fixed seed, so that `l(theta)` is a deterministic function.
    Pspf(FilterConfig),
    /// Exact likelihood; the family must build linear Gaussian models.
    Kalman,
}

impl LikelihoodMethod {
    pub fn log_likelihood<F: ModelFamily + ?Sized>(&self, family: &F, obs: &[DVector<f64>], theta: &[f64]) -> Result<f64> {
        let model = family.build(theta)?;
        match self {
            LikelihoodMethod::Pspf(config) => Ok(run_pspf(model.as_ref(), obs, config)?.loglik),
            LikelihoodMethod::Kalman => {
                let lg = model
                    .as_linear_gaussian()
                    .ok_or(PspfError::Unsupported("an exact linear Gaussian form"))?;
                kalman_mixture_loglik(lg, obs)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmlOptions {
    pub method: LikelihoodMethod,
    pub optimizer: QuasiNewtonOptions,
    /// Relative finite-difference step of the observed information.
    pub hessian_step: f64,
}

impl SmlOptions {
    pub fn new(method: LikelihoodMethod) -> Self {
        Self {
            method,
            optimizer: QuasiNewtonOptions::default(),
            hessian_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmlResult {
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Square roots of the diagonal of the inverse observed information;
    /// `None` when the finite-difference information is not positive definite.
    pub std_errors: Option<Vec<f64>>,
    pub observed_information: DMatrix<f64>,
    /// Every likelihood evaluation of the optimizer, in order.
    pub trace: Vec<(Vec<f64>, f64)>,
    pub iterations: usize,
    /// False when the optimizer stopped without meeting its tolerances,
    /// including line-search failure; `theta` is then the best point found.
    pub converged: bool,
}

/// Maximizes the (simulated) log-likelihood over `theta` by BFGS with
/// central-difference gradients, starting from `theta0`.
pub fn estimate_sml<F: ModelFamily + ?Sized>(
    family: &F,
    obs: &[DVector<f64>],
    theta0: &[f64],
    opts: &SmlOptions,
) -> Result<SmlResult> {
    let names = family.parameter_names();
    if theta0.len() != names.len() {
        return Err(PspfError::Shape(format!(
            "{} starting values for {} parameters",
            theta0.len(),
            names.len()
        )));
    }
    let l0 = opts.method.log_likelihood(family, obs, theta0).unwrap_or(f64::NAN);
    if !l0.is_finite() {
        return Err(PspfError::NonFiniteStart);
    }
    let trace = RefCell::new(vec![(theta0.to_vec(), l0)]);
    let neg = |x: &DVector<f64>| {
        let l = opts.method.log_likelihood(family, obs, x.as_slice()).unwrap_or(f64::NAN);
        trace.borrow_mut().push((x.as_slice().to_vec(), l));
        -l
    };
    let found = minimize_quasi_newton(neg, DVector::from_column_slice(theta0), &opts.optimizer);
    let mut neg_quiet = |x: &DVector<f64>| -opts.method.log_likelihood(family, obs, x.as_slice()).unwrap_or(f64::NAN);
    let info = numerical_hessian(&mut neg_quiet, &found.x, opts.hessian_step);
    let std_errors = (info.iter().all(|v| v.is_finite()))
        .then(|| info.clone().cholesky())
        .flatten()
        .map(|c| c.inverse().diagonal().iter().map(|v| v.sqrt()).collect());
    Ok(SmlResult {
        theta: found.x.as_slice().to_vec(),
        loglik: -found.value,
        std_errors,
        observed_information: info,
        trace: trace.into_inner(),
        iterations: found.iterations,
        converged: found.converged,
    })
}
