//! State-space model abstractions.
//!
//! A model is simulated forward through [`StateSpaceModel::transition`]
//! (`x_t = g(x_{t-1}, v_t)`, `t >= 1`) from a draw of the initial law, and is
//! observed through `y_t`. The pre-smoothed filters additionally need the
//! measurement to be linear Gaussian, `y_t = M x_t + eps`, `eps ~ N(0, S)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PspfError, Result};
use crate::gaussian::GaussianFactor;
use crate::linalg::{mat_vec, psd_sqrt};
use crate::rng::StreamRng;
use crate::swarm::Swarm;

/// `y = M x + eps`, `eps ~ N(0, cov)` with `cov` positive definite.
#[derive(Debug, Clone)]
pub struct LinearObservation {
    matrix: DMatrix<f64>,
    cov: DMatrix<f64>,
    factor: GaussianFactor,
}

impl LinearObservation {
    pub fn new(matrix: DMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != matrix.nrows() || !cov.is_square() {
            return Err(PspfError::Shape(format!(
                "measurement matrix is {}x{} but observation covariance is {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(PspfError::InvalidArgument("observation covariance is not symmetric".into()));
        }
        let factor = GaussianFactor::new(&cov, "observation covariance")?;
        Ok(Self { matrix, cov, factor })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn factor(&self) -> &GaussianFactor {
        &self.factor
    }

    pub fn dim_state(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn dim_obs(&self) -> usize {
        self.matrix.nrows()
    }

    /// `log N(y | M x, cov)`; `scratch` must have length `dim_obs`.
    #[inline]
    pub fn logpdf(&self, y: &[f64], x: &[f64], scratch: &mut [f64]) -> f64 {
        mat_vec(&self.matrix, x, scratch);
        for (s, yk) in scratch.iter_mut().zip(y) {
            *s = yk - *s;
        }
        self.factor.log_density_residual(scratch)
    }
}

/// Optional structure a model exposes beyond simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    /// `linear_observation` returns a measurement.
    pub linear_observation: bool,
    /// `transition_mean` is implemented.
    pub transition_mean: bool,
    /// `transition_gaussian` is implemented.
    pub gaussian_transition: bool,
}

pub trait StateSpaceModel: Send + Sync {
    fn dim_state(&self) -> usize;
    fn dim_obs(&self) -> usize;

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]);

    /// Draws `x_t` given `x_{t-1} = prev`.
    fn transition(&self, prev: &[f64], t: usize, rng: &mut StreamRng, out: &mut [f64]);

    /// The linear Gaussian measurement at time `t`, when the model has one.
    fn linear_observation(&self, t: usize) -> Option<&LinearObservation>;

    /// `log p(y_t | x_t)`.
    fn obs_logpdf(&self, y: &[f64], x: &[f64], t: usize) -> f64 {
        let obs = self
            .linear_observation(t)
            .expect("models without a linear observation must implement obs_logpdf");
        let mut scratch = vec![0.0; obs.dim_obs()];
        obs.logpdf(y, x, &mut scratch)
    }

    fn sample_obs(&self, x: &[f64], t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let obs = self
            .linear_observation(t)
            .expect("models without a linear observation must implement sample_obs");
        let z: Vec<f64> = (0..obs.dim_obs()).map(|_| StandardNormal.sample(rng)).collect();
        let mut noise = vec![0.0; obs.dim_obs()];
        mat_vec(obs.factor().lower(), &z, &mut noise);
        mat_vec(obs.matrix(), x, out);
        for (o, e) in out.iter_mut().zip(&noise) {
            *o += e;
        }
    }

    /// `E[x_t | x_{t-1} = prev]`, if known. Needed by the auxiliary SIR filter.
    fn transition_mean(&self, _prev: &[f64], _t: usize, _mean: &mut [f64]) -> bool {
        false
    }

    /// Gaussian law of `x_t | x_{t-1} = prev`, if the transition is
    /// conditionally Gaussian. Needed by the fully adapted auxiliary filter.
    fn transition_gaussian(&self, _prev: &[f64], _t: usize, _mean: &mut [f64], _cov: &mut DMatrix<f64>) -> bool {
        false
    }

    /// The exact linear Gaussian form of the model, when it has one.
    fn as_linear_gaussian(&self) -> Option<&LinearGaussianSsm> {
        None
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            linear_observation: self.linear_observation(1).is_some(),
            ..Capabilities::default()
        }
    }
}

/// A component of a Gaussian-mixture initial law.
#[derive(Debug, Clone)]
pub struct InitialComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `x_t = F x_{t-1} + c + N(0, Q)`, linear Gaussian measurement and a finite
/// Gaussian-mixture initial law.
#[derive(Debug, Clone)]
pub struct LinearGaussianSsm {
    transition: DMatrix<f64>,
    offset: DVector<f64>,
    state_cov: DMatrix<f64>,
    state_sqrt: DMatrix<f64>,
    obs: LinearObservation,
    initial: Vec<InitialComponent>,
    initial_sqrt: Vec<DMatrix<f64>>,
    initial_cum: Vec<f64>,
}

impl LinearGaussianSsm {
    pub fn new(
        transition: DMatrix<f64>,
        offset: DVector<f64>,
        state_cov: DMatrix<f64>,
        obs: LinearObservation,
        initial: Vec<InitialComponent>,
    ) -> Result<Self> {
        let d = transition.nrows();
        let shape_ok = transition.is_square()
            && offset.len() == d
            && state_cov.shape() == (d, d)
            && obs.dim_state() == d
            && !initial.is_empty()
            && initial.iter().all(|c| c.mean.len() == d && c.cov.shape() == (d, d));
        if !shape_ok {
            return Err(PspfError::Shape("inconsistent linear Gaussian model dimensions".into()));
        }
        if initial.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(PspfError::InvalidArgument("negative initial mixture weight".into()));
        }
        let total: f64 = initial.iter().map(|c| c.weight).sum();
        let mut acc = 0.0;
        let initial_cum = initial
            .iter()
            .map(|c| {
                acc += c.weight / total;
                acc
            })
            .collect();
        let initial: Vec<InitialComponent> = initial
            .into_iter()
            .map(|c| InitialComponent {
                weight: c.weight / total,
                ..c
            })
            .collect();
        Ok(Self {
            state_sqrt: psd_sqrt(&state_cov),
            initial_sqrt: initial.iter().map(|c| psd_sqrt(&c.cov)).collect(),
            transition,
            offset,
            state_cov,
            obs,
            initial,
            initial_cum,
        })
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn state_cov(&self) -> &DMatrix<f64> {
        &self.state_cov
    }

    pub fn observation(&self) -> &LinearObservation {
        &self.obs
    }

    pub fn initial(&self) -> &[InitialComponent] {
        &self.initial
    }

    /// Same dynamics and measurement with a different initial law.
    pub fn with_initial(&self, initial: Vec<InitialComponent>) -> Result<Self> {
        Self::new(
            self.transition.clone(),
            self.offset.clone(),
            self.state_cov.clone(),
            self.obs.clone(),
            initial,
        )
    }
}

impl StateSpaceModel for LinearGaussianSsm {
    fn dim_state(&self) -> usize {
        self.transition.nrows()
    }

    fn dim_obs(&self) -> usize {
        self.obs.dim_obs()
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let k = self
            .initial_cum
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.initial.len() - 1);
        let d = out.len();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        mat_vec(&self.initial_sqrt[k], &z, out);
        for (o, m) in out.iter_mut().zip(self.initial[k].mean.iter()) {
            *o += m;
        }
    }

    fn transition(&self, prev: &[f64], _t: usize, rng: &mut StreamRng, out: &mut [f64]) {
        let d = out.len();
        let mut z = [0.0f64; 32];
        let mut zv;
        let z: &mut [f64] = if d <= 32 {
            &mut z[..d]
        } else {
            zv = vec![0.0; d];
            &mut zv
        };
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        mat_vec(&self.transition, prev, out);
        // state_sqrt may come from the eigen fallback, so it is not always triangular
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = self.offset[r];
            for (c, zc) in z.iter().enumerate() {
                s += self.state_sqrt[(r, c)] * zc;
            }
            *o += s;
        }
    }

    fn linear_observation(&self, _t: usize) -> Option<&LinearObservation> {
        Some(&self.obs)
    }

    fn transition_mean(&self, prev: &[f64], _t: usize, mean: &mut [f64]) -> bool {
        mat_vec(&self.transition, prev, mean);
        for (m, c) in mean.iter_mut().zip(self.offset.iter()) {
            *m += c;
        }
        true
    }

    fn transition_gaussian(&self, prev: &[f64], t: usize, mean: &mut [f64], cov: &mut DMatrix<f64>) -> bool {
        self.transition_mean(prev, t, mean);
        cov.copy_from(&self.state_cov);
        true
    }

    fn as_linear_gaussian(&self) -> Option<&LinearGaussianSsm> {
        Some(self)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            linear_observation: true,
            transition_mean: true,
            gaussian_transition: true,
        }
    }
}

/// A simulated trajectory: `states` row `t-1` is `x_t`, `observations[t-1]` is `y_t`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Swarm,
    pub observations: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Draws `x_0` from the initial law, then `(x_t, y_t)` for `t = 1..=steps`.
pub fn simulate<M: StateSpaceModel + ?Sized>(model: &M, steps: usize, rng: &mut StreamRng) -> Result<Trajectory> {
    if steps == 0 {
        return Err(PspfError::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let dx = model.dim_state();
    let dy = model.dim_obs();
    let mut prev = vec![0.0; dx];
    model.sample_initial(rng, &mut prev);
    let mut states = Swarm::zeros(steps, dx);
    let mut observations = Vec::with_capacity(steps);
    let mut y = vec![0.0; dy];
    for t in 1..=steps {
        let x = states.particle_mut(t - 1);
        model.transition(&prev, t, rng, x);
        model.sample_obs(x, t, rng, &mut y);
        prev.copy_from_slice(x);
        observations.push(DVector::from_column_slice(&y));
    }
    Ok(Trajectory { states, observations })
}
