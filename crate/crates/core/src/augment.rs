//! State augmentation for nonlinear measurements.
//!
//! A model observed as `y = m(x) + eps`, `eps ~ N(0, S)`, is rewritten with
//! the extra state `z = m(x) + eta`, `eta ~ N(0, r^2 S)`, and the linear
//! measurement `y = z + eps'`, `eps' ~ N(0, (1 - r^2) S)`. The marginal law of
//! the observations is unchanged. The augmented state is `[x, z]`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PspfError, Result};
use crate::linalg::{cholesky_jittered, mat_vec};
use crate::model::{LinearObservation, StateSpaceModel};
use crate::rng::StreamRng;

/// Default split of the measurement noise: half of its variance goes into the state.
pub const EVEN_SPLIT: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A state-space model with additive Gaussian measurement noise around a
/// (possibly nonlinear) measurement function.
pub trait NonlinearMeasurement: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_obs(&self) -> usize;
    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]);
    fn transition(&self, prev: &[f64], t: usize, rng: &mut StreamRng, out: &mut [f64]);
    /// `m(x)`.
    fn measure(&self, x: &[f64], t: usize, out: &mut [f64]);
    /// The measurement noise covariance `S`.
    fn noise_cov(&self) -> &DMatrix<f64>;
}

/// The augmented linear-measurement form of a [`NonlinearMeasurement`] model.
#[derive(Debug, Clone)]
pub struct AugmentedModel<B> {
    base: B,
    split: f64,
    obs: LinearObservation,
    eta_lower: DMatrix<f64>,
}

impl<B: NonlinearMeasurement> AugmentedModel<B> {
    /// `split` is `r` in `eta ~ N(0, r^2 S)` and must lie in `(0, 1)`.
    pub fn new(base: B, split: f64) -> Result<Self> {
        if !(split > 0.0 && split < 1.0) {
            return Err(PspfError::Domain {
                name: "noise split r",
                value: split,
                allowed: "(0, 1)",
            });
        }
        let (dx, dy) = (base.dim_state(), base.dim_obs());
        let s = base.noise_cov().clone();
        if s.nrows() != dy || !s.is_square() {
            return Err(PspfError::Shape(format!(
                "noise covariance is {}x{} for {dy} observation coordinates",
                s.nrows(),
                s.ncols()
            )));
        }
        let mut matrix = DMatrix::zeros(dy, dx + dy);
        for k in 0..dy {
            matrix[(k, dx + k)] = 1.0;
        }
        let obs = LinearObservation::new(matrix, &s * (1.0 - split * split))?;
        let eta_lower = cholesky_jittered(&s, "measurement noise covariance")?.l() * split;
        Ok(Self {
            base,
            split,
            obs,
            eta_lower,
        })
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    pub fn split(&self) -> f64 {
        self.split
    }

    /// Index of the first instrumental coordinate in the augmented state.
    pub fn instrumental_offset(&self) -> usize {
        self.base.dim_state()
    }

    fn fill_instrumental(&self, state: &mut [f64], t: usize, rng: &mut StreamRng) {
        let (x, z) = state.split_at_mut(self.base.dim_state());
        self.base.measure(x, t, z);
        let e: Vec<f64> = (0..z.len()).map(|_| StandardNormal.sample(rng)).collect();
        let mut noise = vec![0.0; z.len()];
        mat_vec(&self.eta_lower, &e, &mut noise);
        for (zk, nk) in z.iter_mut().zip(&noise) {
            *zk += nk;
        }
    }
}

impl<B: NonlinearMeasurement> StateSpaceModel for AugmentedModel<B> {
    fn dim_state(&self) -> usize {
        self.base.dim_state() + self.base.dim_obs()
    }

    fn dim_obs(&self) -> usize {
        self.base.dim_obs()
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        self.base.sample_initial(rng, &mut out[..self.base.dim_state()]);
        self.fill_instrumental(out, 0, rng);
    }

    fn transition(&self, prev: &[f64], t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let dx = self.base.dim_state();
        self.base.transition(&prev[..dx], t, rng, &mut out[..dx]);
        self.fill_instrumental(out, t, rng);
    }

    fn linear_observation(&self, _t: usize) -> Option<&LinearObservation> {
        Some(&self.obs)
    }
}
