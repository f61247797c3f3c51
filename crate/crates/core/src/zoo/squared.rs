use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::augment::{AugmentedModel, NonlinearMeasurement, EVEN_SPLIT};
use crate::error::Result;
use crate::filters::{run_sir, FilterConfig, FilterRun, Resampler};
use crate::gaussian::normal_logpdf;
use crate::model::{Capabilities, LinearObservation, StateSpaceModel};
use crate::rng::StreamRng;

/// Particle count of the reference SIR filter.
pub const REFERENCE_SIR_PARTICLES: usize = 1_000_000;

/// `y_t = x_t^2 / 20 + eta_t / 2`, `x_t = x_{t-1} / 2 + sqrt(3/4) eps_t`,
/// `x_0 ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct SquaredObsModel {
    noise_cov: DMatrix<f64>,
}

/// The squared-observation model with the extra state `z_t = x_t^2 / 20 + noise`.
/// State order is `[x, z]`.
pub type AugmentedSquaredObs = AugmentedModel<SquaredObsModel>;

impl Default for SquaredObsModel {
    fn default() -> Self {
        Self::new()
    }
}

impl SquaredObsModel {
    pub const AR: f64 = 0.5;
    pub const STATE_VAR: f64 = 0.75;
    pub const OBS_VAR: f64 = 0.25;

    pub fn new() -> Self {
        Self {
            noise_cov: DMatrix::from_element(1, 1, Self::OBS_VAR),
        }
    }

    /// Augmented form with measurement-noise split `r` (variance `r^2 / 4` in the state).
    pub fn augmented(split: f64) -> Result<AugmentedSquaredObs> {
        AugmentedModel::new(Self::new(), split)
    }

    /// Augmented form with the noise variance split evenly.
    pub fn augmented_even() -> AugmentedSquaredObs {
        Self::augmented(EVEN_SPLIT).expect("even split is valid")
    }
}

impl NonlinearMeasurement for SquaredObsModel {
    fn dim_state(&self) -> usize {
        1
    }

    fn dim_obs(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        out[0] = StandardNormal.sample(rng);
    }

    fn transition(&self, prev: &[f64], _t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let e: f64 = StandardNormal.sample(rng);
        out[0] = Self::AR * prev[0] + Self::STATE_VAR.sqrt() * e;
    }

    fn measure(&self, x: &[f64], _t: usize, out: &mut [f64]) {
        out[0] = x[0] * x[0] / 20.0;
    }

    fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }
}

impl StateSpaceModel for SquaredObsModel {
    fn dim_state(&self) -> usize {
        1
    }

    fn dim_obs(&self) -> usize {
        1
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        NonlinearMeasurement::sample_initial(self, rng, out)
    }

    fn transition(&self, prev: &[f64], t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        NonlinearMeasurement::transition(self, prev, t, rng, out)
    }

    fn linear_observation(&self, _t: usize) -> Option<&LinearObservation> {
        None
    }

    fn obs_logpdf(&self, y: &[f64], x: &[f64], _t: usize) -> f64 {
        normal_logpdf(y[0], x[0] * x[0] / 20.0, Self::OBS_VAR)
    }

    fn sample_obs(&self, x: &[f64], _t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let e: f64 = StandardNormal.sample(rng);
        out[0] = x[0] * x[0] / 20.0 + Self::OBS_VAR.sqrt() * e;
    }

    fn transition_mean(&self, prev: &[f64], _t: usize, mean: &mut [f64]) -> bool {
        mean[0] = Self::AR * prev[0];
        true
    }

    fn transition_gaussian(&self, prev: &[f64], t: usize, mean: &mut [f64], cov: &mut DMatrix<f64>) -> bool {
        self.transition_mean(prev, t, mean);
        cov[(0, 0)] = Self::STATE_VAR;
        true
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            linear_observation: false,
            transition_mean: true,
            gaussian_transition: true,
        }
    }
}

/// High-count SIR filter on the original (non-augmented) representation,
/// used as the reference for log-likelihoods and filter quantiles.
pub fn reference_sir_loglik(model: &SquaredObsModel, obs: &[DVector<f64>], n: usize, seed: u64) -> Result<FilterRun> {
    let config = FilterConfig::new(n, seed).with_resampler(Resampler::Multinomial);
    run_sir(model, obs, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Purpose};

    fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    #[test]
    fn augmented_observations_match_original_in_law() {
        let orig = SquaredObsModel::new();
        let aug = SquaredObsModel::augmented_even();
        let n = 100_000;
        let one_step = |m: &dyn StateSpaceModel, seed: u64| -> Vec<f64> {
            let mut rng = stream_rng(seed, Purpose::Test, 0);
            let mut x0 = vec![0.0; m.dim_state()];
            let mut x1 = vec![0.0; m.dim_state()];
            let mut y = [0.0];
            (0..n)
                .map(|_| {
                    m.sample_initial(&mut rng, &mut x0);
                    m.transition(&x0, 1, &mut rng, &mut x1);
                    m.sample_obs(&x1, 1, &mut rng, &mut y);
                    y[0]
                })
                .collect()
        };
        let d = ks_statistic(one_step(&orig, 1), one_step(&aug, 2));
        // two-sample KS: sd of sqrt(n/2) D is about 0.27 under the null; allow 4 sd above the mean 0.87
        let scaled = d * (n as f64 / 2.0).sqrt();
        assert!(scaled < 0.87 + 4.0 * 0.27, "scaled KS statistic {scaled}");
    }

    #[test]
    fn augmented_layout() {
        let aug = SquaredObsModel::augmented_even();
        let lin = aug.linear_observation(1).unwrap();
        assert_eq!(lin.matrix().as_slice(), &[0.0, 1.0]);
        assert!((lin.cov()[(0, 0)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn reference_filter_depends_on_particle_count() {
        let m = SquaredObsModel::new();
        let tr = crate::model::simulate(&m, 10, &mut stream_rng(3, Purpose::Simulate, 0)).unwrap();
        let small = reference_sir_loglik(&m, &tr.observations, 100, 1).unwrap().loglik;
        let large = reference_sir_loglik(&m, &tr.observations, 100_000, 1).unwrap().loglik;
        assert!(small.is_finite() && large.is_finite());
        assert_ne!(small, large);
    }
}
