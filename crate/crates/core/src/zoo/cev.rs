use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PspfError, Result};
use crate::filters::ModelFamily;
use crate::model::{Capabilities, LinearObservation, StateSpaceModel};
use crate::rng::StreamRng;

/// Time step of the discretization (daily data, 252 trading days a year).
pub const CEV_DT: f64 = 1.0 / 252.0;

/// States below this value are set to it.
pub const CEV_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CevParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub sigma_y: f64,
}

impl CevParams {
    pub const NAMES: [&'static str; 5] = ["log_alpha", "log_beta", "log_sigma", "log_gamma", "log_sigma_y"];

    /// The benchmark parameter point, on the log scale:
    /// `(1.570, 0.815, -1.612, 0.486, -3.739)`.
    pub const BENCHMARK_LOG: [f64; 5] = [1.570, 0.815, -1.612, 0.486, -3.739];

    pub fn benchmark() -> Self {
        Self::from_log(&Self::BENCHMARK_LOG).expect("benchmark point is valid")
    }

    /// Parameters from `(log alpha, log beta, log sigma, log gamma, log sigma_y)`.
    pub fn from_log(theta: &[f64]) -> Result<Self> {
        if theta.len() != 5 {
            return Err(PspfError::Shape(format!("{} values for 5 CEV parameters", theta.len())));
        }
        let e: Vec<f64> = theta.iter().map(|v| v.exp()).collect();
        let p = Self {
            alpha: e[0],
            beta: e[1],
            sigma: e[2],
            gamma: e[3],
            sigma_y: e[4],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_log(&self) -> [f64; 5] {
        [self.alpha, self.beta, self.sigma, self.gamma, self.sigma_y].map(f64::ln)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("alpha", self.alpha, false),
            ("beta", self.beta, false),
            ("sigma", self.sigma, true),
            ("gamma", self.gamma, true),
            ("sigma_y", self.sigma_y, false),
        ];
        for (name, v, zero_ok) in checks {
            let ok = v.is_finite() && (v > 0.0 || (zero_ok && v == 0.0));
            if !ok {
                return Err(PspfError::Domain {
                    name,
                    value: v,
                    allowed: if zero_ok { "[0, inf)" } else { "(0, inf)" },
                });
            }
        }
        Ok(())
    }

    /// Mean `alpha / beta` of the continuous-time process.
    pub fn stationary_mean(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Euler discretization of a CEV diffusion observed with noise:
/// `x_t = x_{t-1} + dt (alpha - beta x_{t-1}) + sqrt(dt) sigma x_{t-1}^gamma eta_t`,
/// `y_t = x_t + sigma_y eps_t`.
///
/// Draws below [`CEV_FLOOR`] are set to the floor and counted. `x_0` is drawn
/// from `N(alpha / beta, (sigma (alpha / beta)^gamma)^2 / (2 beta))`, floored
/// the same way.
#[derive(Debug)]
pub struct CevModel {
    params: CevParams,
    obs: LinearObservation,
    transitions: AtomicU64,
    floor_hits: AtomicU64,
}

impl Clone for CevModel {
    fn clone(&self) -> Self {
        Self::new(self.params).expect("parameters were validated")
    }
}

impl CevModel {
    pub fn new(params: CevParams) -> Result<Self> {
        params.validate()?;
        let obs = LinearObservation::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, params.sigma_y * params.sigma_y),
        )?;
        Ok(Self {
            params,
            obs,
            transitions: AtomicU64::new(0),
            floor_hits: AtomicU64::new(0),
        })
    }

    pub fn params(&self) -> &CevParams {
        &self.params
    }

    /// Fraction of transitions (and initial draws) that hit the floor since
    /// construction or the last [`reset_diagnostics`](Self::reset_diagnostics).
    pub fn floor_activation_rate(&self) -> f64 {
        let n = self.transitions.load(Ordering::Relaxed);
        if n == 0 {
            0.0
        } else {
            self.floor_hits.load(Ordering::Relaxed) as f64 / n as f64
        }
    }

    pub fn floor_activations(&self) -> u64 {
        self.floor_hits.load(Ordering::Relaxed)
    }

    pub fn reset_diagnostics(&self) {
        self.transitions.store(0, Ordering::Relaxed);
        self.floor_hits.store(0, Ordering::Relaxed);
    }

    fn floored(&self, x: f64) -> f64 {
        self.transitions.fetch_add(1, Ordering::Relaxed);
        if x < CEV_FLOOR {
            self.floor_hits.fetch_add(1, Ordering::Relaxed);
            CEV_FLOOR
        } else {
            x
        }
    }

    /// Conditional mean and standard deviation of `x_t` given `x_{t-1}`.
    /// States below the floor (possible after kernel resampling) are read as the floor.
    fn step_moments(&self, prev: f64) -> (f64, f64) {
        let p = &self.params;
        let x = prev.max(CEV_FLOOR);
        (x + CEV_DT * (p.alpha - p.beta * x), CEV_DT.sqrt() * p.sigma * x.powf(p.gamma))
    }
}

impl StateSpaceModel for CevModel {
    fn dim_state(&self) -> usize {
        1
    }

    fn dim_obs(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let p = &self.params;
        let m = p.stationary_mean();
        let sd = p.sigma * m.powf(p.gamma) / (2.0 * p.beta).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.floored(m + sd * z);
    }

    fn transition(&self, prev: &[f64], _t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let (m, sd) = self.step_moments(prev[0]);
        let z: f64 = StandardNormal.sample(rng);
        out[0] = self.floored(m + sd * z);
    }

    fn linear_observation(&self, _t: usize) -> Option<&LinearObservation> {
        Some(&self.obs)
    }

    fn transition_mean(&self, prev: &[f64], _t: usize, mean: &mut [f64]) -> bool {
        mean[0] = self.step_moments(prev[0]).0;
        true
    }

    /// The Gaussian step before flooring.
    fn transition_gaussian(&self, prev: &[f64], _t: usize, mean: &mut [f64], cov: &mut DMatrix<f64>) -> bool {
        let (m, sd) = self.step_moments(prev[0]);
        mean[0] = m;
        cov[(0, 0)] = sd * sd;
        true
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            linear_observation: true,
            transition_mean: true,
            gaussian_transition: true,
        }
    }
}

/// CEV models indexed by `(log alpha, log beta, log sigma, log gamma, log sigma_y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CevFamily;

impl ModelFamily for CevFamily {
    fn parameter_names(&self) -> Vec<String> {
        CevParams::NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn build(&self, theta: &[f64]) -> Result<Box<dyn StateSpaceModel>> {
        Ok(Box::new(CevModel::new(CevParams::from_log(theta)?)?))
    }
}
