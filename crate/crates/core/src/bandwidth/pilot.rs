//! Gaussian variance pilot and two-component mixture bias pilot.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;

use crate::error::{PspfError, Result};
use crate::gaussian::GaussianFactor;
use crate::linalg::{logsumexp, symmetrize};
use crate::rng::StreamRng;
use crate::swarm::{weighted_moments, Swarm};

/// `N(mu_hat, Sigma_hat)` fitted by the sample moments.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePilot {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl VariancePilot {
    pub fn from_swarm(swarm: &Swarm) -> Result<Self> {
        let (mean, cov) = swarm.moments()?;
        Ok(Self { mean, cov })
    }
}

/// Two-component Gaussian mixture pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasPilot {
    pub weights: [f64; 2],
    pub means: [DVector<f64>; 2],
    pub covs: [DMatrix<f64>; 2],
}

impl BiasPilot {
    /// The variance pilot as a degenerate mixture with weights `(1, 0)`.
    pub fn single(v: &VariancePilot) -> Self {
        Self {
            weights: [1.0, 0.0],
            means: [v.mean.clone(), v.mean.clone()],
            covs: [v.cov.clone(), v.cov.clone()],
        }
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(2);
        for l in 0..2 {
            if self.weights[l] > 0.0 {
                let f = GaussianFactor::new(&self.covs[l], "bias pilot covariance")?;
                let r: Vec<f64> = x.iter().zip(self.means[l].iter()).map(|(a, b)| a - b).collect();
                terms.push(self.weights[l].ln() + f.log_density_residual(&r));
            }
        }
        Ok(logsumexp(&terms))
    }
}

/// How the returned bias pilot was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotStatus {
    Fitted,
    /// One component collapsed once and was restarted from the variance pilot.
    Reinitialized,
    /// A second collapse occurred; the variance pilot is returned.
    SingleComponent,
}

/// Subsample size used when none is given.
pub const DEFAULT_PILOT_SUBSAMPLE: usize = 2000;

/// Fits the bias pilot by `em_iters` EM iterations on a random subsample of
/// at most `subsample` particles (all particles when `None`).
///
/// The components start at `mu_hat +- sqrt(lambda) v` along the leading
/// principal axis of the (sub)sample, each with the sample covariance. The
/// result depends continuously on the particle positions for a fixed `rng`.
pub fn fit_bias_pilot(
    swarm: &Swarm,
    em_iters: usize,
    subsample: Option<usize>,
    rng: &mut StreamRng,
) -> Result<(BiasPilot, PilotStatus)> {
    if em_iters == 0 {
        return Err(PspfError::InvalidArgument("em_iters must be at least 1".into()));
    }
    let n = swarm.n();
    if n < 4 {
        return Err(PspfError::InsufficientSample { required: 4, actual: n });
    }
    let variance = VariancePilot::from_swarm(swarm)?;
    let data = match subsample {
        Some(m) if m < n => {
            if m < 4 {
                return Err(PspfError::InvalidArgument(format!("pilot subsample {m} is below 4")));
            }
            let mut idx = index::sample(rng, n, m).into_vec();
            idx.sort_unstable();
            let mut s = Swarm::zeros(m, swarm.dim());
            for (row, &i) in s.iter_mut().zip(&idx) {
                row.copy_from_slice(swarm.particle(i));
            }
            s
        }
        _ => swarm.clone(),
    };
    let (mu, sigma) = data.moments()?;
    let eig = SymmetricEigen::new(sigma.clone());
    let (k, lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let delta = eig.eigenvectors.column(k) * lambda.max(0.0).sqrt();
    let mut pilot = BiasPilot {
        weights: [0.5, 0.5],
        means: [&mu - &delta, &mu + &delta],
        covs: [sigma.clone(), sigma.clone()],
    };

    let mut collapses = 0;
    let mut iter = 0;
    while iter < em_iters {
        match em_step(&data, &pilot) {
            Ok(next) => {
                pilot = next;
                iter += 1;
            }
            Err(collapsed) => {
                collapses += 1;
                if collapses > 1 {
                    return Ok((BiasPilot::single(&variance), PilotStatus::SingleComponent));
                }
                pilot.weights = [0.5, 0.5];
                pilot.means[collapsed] = variance.mean.clone();
                pilot.covs[collapsed] = &variance.cov * 2.0;
            }
        }
    }
    for l in 0..2 {
        if GaussianFactor::new(&pilot.covs[l], "bias pilot covariance").is_err() {
            return Ok((BiasPilot::single(&variance), PilotStatus::SingleComponent));
        }
    }
    let status = if collapses == 0 {
        PilotStatus::Fitted
    } else {
        PilotStatus::Reinitialized
    };
    Ok((pilot, status))
}

/// One EM iteration; `Err(l)` reports that component `l` collapsed.
fn em_step(data: &Swarm, pilot: &BiasPilot) -> std::result::Result<BiasPilot, usize> {
    let m = data.n();
    let d = data.dim();
    let mut factors = Vec::with_capacity(2);
    for l in 0..2 {
        if pilot.weights[l] <= 0.0 {
            return Err(l);
        }
        factors.push(GaussianFactor::new(&pilot.covs[l], "bias pilot covariance").map_err(|_| l)?);
    }
    let log_q = [pilot.weights[0].ln(), pilot.weights[1].ln()];
    let mut resp = vec![0.0; m];
    let mut r = vec![0.0; d];
    for (j, x) in data.iter().enumerate() {
        let mut lp = [0.0; 2];
        for l in 0..2 {
            for ((rk, xk), mk) in r.iter_mut().zip(x).zip(pilot.means[l].iter()) {
                *rk = xk - mk;
            }
            lp[l] = log_q[l] + factors[l].log_density_residual(&r);
        }
        resp[j] = 1.0 / (1.0 + (lp[1] - lp[0]).exp());
    }
    let other: Vec<f64> = resp.iter().map(|p| 1.0 - p).collect();
    let mut next = pilot.clone();
    for (l, w) in [resp, other].iter().enumerate() {
        let total: f64 = w.iter().sum();
        // A component needs more effective points than dimensions to keep a full-rank covariance.
        if !(total > d as f64) {
            return Err(l);
        }
        let (mean, mut cov) = weighted_moments(data, Some(w));
        symmetrize(&mut cov);
        next.weights[l] = total / m as f64;
        next.means[l] = mean;
        next.covs[l] = cov;
    }
    let s = next.weights[0] + next.weights[1];
    next.weights[0] /= s;
    next.weights[1] = 1.0 - next.weights[0];
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::normal_logpdf;
    use crate::rng::{stream_rng, Purpose};
    use rand_distr::{Distribution, StandardNormal};

    fn normal_swarm(seed: u64, n: usize, shift: impl Fn(usize) -> f64) -> Swarm {
        let mut rng = stream_rng(seed, Purpose::Test, 3);
        let v = (0..n)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + shift(i)
            })
            .collect();
        Swarm::from_flat(1, v).unwrap()
    }

    #[test]
    fn zero_iterations_rejected() {
        let s = normal_swarm(1, 50, |_| 0.0);
        let mut rng = stream_rng(1, Purpose::Pilot, 0);
        assert!(matches!(
            fit_bias_pilot(&s, 0, None, &mut rng),
            Err(PspfError::InvalidArgument(_))
        ));
    }

    #[test]
    fn single_gaussian_density_at_mean() {
        let s = normal_swarm(2, 5000, |_| 1.0);
        let mut rng = stream_rng(2, Purpose::Pilot, 0);
        let (p, _) = fit_bias_pilot(&s, 4, None, &mut rng).unwrap();
        let fitted = p.log_density(&[1.0]).unwrap().exp();
        let truth = normal_logpdf(1.0, 1.0, 1.0).exp();
        assert!((fitted / truth - 1.0).abs() < 0.1, "{fitted} vs {truth}");
        assert!((p.weights[0] + p.weights[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_clusters() {
        let s = normal_swarm(3, 4000, |i| if i % 2 == 0 { -5.0 } else { 5.0 });
        let mut rng = stream_rng(3, Purpose::Pilot, 0);
        let (p, status) = fit_bias_pilot(&s, 4, Some(DEFAULT_PILOT_SUBSAMPLE), &mut rng).unwrap();
        assert_eq!(status, PilotStatus::Fitted);
        let (lo, hi) = if p.means[0][0] < p.means[1][0] { (0, 1) } else { (1, 0) };
        assert!((p.means[lo][0] + 5.0).abs() < 0.5 && (p.means[hi][0] - 5.0).abs() < 0.5);
        assert!((p.weights[0] - 0.5).abs() < 0.1);
    }

    #[test]
    fn identical_particles_fall_back() {
        let s = Swarm::from_flat(1, vec![2.0; 30]).unwrap();
        let mut rng = stream_rng(4, Purpose::Pilot, 0);
        let (p, status) = fit_bias_pilot(&s, 4, None, &mut rng).unwrap();
        assert_eq!(status, PilotStatus::SingleComponent);
        assert_eq!(p.weights, [1.0, 0.0]);
        assert_eq!(p.means[0][0], 2.0);
    }

    #[test]
    fn deterministic_for_fixed_stream() {
        let s = normal_swarm(5, 3000, |i| (i % 3) as f64);
        let fit = || fit_bias_pilot(&s, 4, Some(500), &mut stream_rng(9, Purpose::Pilot, 2)).unwrap();
        assert_eq!(fit(), fit());
    }

    #[test]
    fn continuous_in_particle_positions() {
        let s = normal_swarm(6, 800, |i| if i % 4 == 0 { 3.0 } else { 0.0 });
        let shifted = |eps: f64| {
            let v: Vec<f64> = s.as_flat().iter().map(|x| x * (1.0 + eps)).collect();
            let sw = Swarm::from_flat(1, v).unwrap();
            fit_bias_pilot(&sw, 4, Some(300), &mut stream_rng(1, Purpose::Pilot, 0)).unwrap().0
        };
        let (p0, p1) = (shifted(0.0), shifted(1e-7));
        for l in 0..2 {
            assert!((p0.means[l][0] - p1.means[l][0]).abs() < 1e-5);
            assert!((p0.weights[l] - p1.weights[l]).abs() < 1e-5);
        }
    }
}
