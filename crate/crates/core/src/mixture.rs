//! Weighted Gaussian mixtures whose components share one covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{PspfError, Result};
use crate::gaussian::{normal_cdf, GaussianFactor};
use crate::linalg::logsumexp;
use crate::swarm::{weighted_moments, Swarm};

/// One mixture component: a weight and a mean (the covariance is shared).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent<'a> {
    pub weight: f64,
    pub mean: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomoskedasticGaussianMixture {
    weights: Vec<f64>,
    means: Swarm,
    common_cov: DMatrix<f64>,
}

impl HomoskedasticGaussianMixture {
    /// Builds a mixture, normalizing `weights` to sum to one.
    pub fn new(weights: Vec<f64>, means: Swarm, common_cov: DMatrix<f64>) -> Result<Self> {
        if weights.len() != means.n() {
            return Err(PspfError::Shape(format!(
                "{} weights for {} components",
                weights.len(),
                means.n()
            )));
        }
        if common_cov.nrows() != means.dim() || common_cov.ncols() != means.dim() {
            return Err(PspfError::Shape(format!(
                "common covariance is {}x{}, components have dimension {}",
                common_cov.nrows(),
                common_cov.ncols(),
                means.dim()
            )));
        }
        if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(PspfError::Domain {
                name: "mixture weight",
                value: w,
                allowed: "[0, inf)",
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(PspfError::InvalidArgument("mixture weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            weights,
            means,
            common_cov,
        })
    }

    /// Like [`new`](Self::new) but takes weights already produced by
    /// [`normalize_log_weights`](crate::linalg::normalize_log_weights).
    pub(crate) fn from_normalized(weights: Vec<f64>, means: Swarm, common_cov: DMatrix<f64>) -> Self {
        debug_assert_eq!(weights.len(), means.n());
        Self {
            weights,
            means,
            common_cov,
        }
    }

    /// Equally weighted components located at the particles.
    pub fn uniform(means: Swarm, common_cov: DMatrix<f64>) -> Result<Self> {
        let n = means.n();
        Self::new(vec![1.0; n], means, common_cov)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Swarm {
        &self.means
    }

    pub fn common_cov(&self) -> &DMatrix<f64> {
        &self.common_cov
    }

    pub fn components(&self) -> impl Iterator<Item = GaussianComponent<'_>> {
        self.weights
            .iter()
            .zip(self.means.iter())
            .map(|(&weight, mean)| GaussianComponent { weight, mean })
    }

    /// Mixture mean and covariance.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (mean, between) = weighted_moments(&self.means, Some(&self.weights));
        (mean, between + &self.common_cov)
    }

    /// Marginal over the listed coordinates.
    pub fn marginal(&self, coords: &[usize]) -> Result<Self> {
        if let Some(&c) = coords.iter().find(|&&c| c >= self.dim()) {
            return Err(PspfError::Shape(format!("coordinate {c} out of range")));
        }
        let mut data = Vec::with_capacity(self.len() * coords.len());
        for m in self.means.iter() {
            data.extend(coords.iter().map(|&c| m[c]));
        }
        let k = coords.len();
        let cov = DMatrix::from_fn(k, k, |i, j| self.common_cov[(coords[i], coords[j])]);
        Ok(Self {
            weights: self.weights.clone(),
            means: Swarm::from_flat(k, data)?,
            common_cov: cov,
        })
    }

    /// Log-density at `x`; requires a positive definite common covariance.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let f = GaussianFactor::new(&self.common_cov, "mixture common covariance")?;
        Ok(self.log_density_with(&f, x))
    }

    pub(crate) fn log_density_with(&self, f: &GaussianFactor, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.dim()];
        let terms: Vec<f64> = self
            .components()
            .filter(|c| c.weight > 0.0)
            .map(|c| {
                for ((rk, a), b) in r.iter_mut().zip(x).zip(c.mean) {
                    *rk = a - b;
                }
                c.weight.ln() + f.log_density_residual(&r)
            })
            .collect();
        logsumexp(&terms)
    }

    /// CDF of coordinate `coord` at `x`.
    pub fn marginal_cdf(&self, coord: usize, x: f64) -> f64 {
        let sd = self.common_cov[(coord, coord)].max(0.0).sqrt();
        self.components()
            .map(|c| {
                let m = c.mean[coord];
                let p = if sd > 0.0 {
                    normal_cdf((x - m) / sd)
                } else if x >= m {
                    1.0
                } else {
                    0.0
                };
                c.weight * p
            })
            .sum()
    }

    /// `p`-quantile of coordinate `coord`.
    ///
    /// Point-mass components give the usual weighted empirical quantile
    /// (smallest location whose cumulative weight reaches `p`); otherwise the
    /// mixture CDF is inverted by bisection.
    pub fn marginal_quantile(&self, coord: usize, p: f64) -> Result<f64> {
        if !(0.0 < p && p < 1.0) {
            return Err(PspfError::Domain {
                name: "quantile level",
                value: p,
                allowed: "(0, 1)",
            });
        }
        let sd = self.common_cov[(coord, coord)].max(0.0).sqrt();
        let mut locs: Vec<(f64, f64)> = self.components().map(|c| (c.mean[coord], c.weight)).collect();
        if sd == 0.0 {
            locs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            for &(x, w) in &locs {
                acc += w;
                if acc >= p {
                    return Ok(x);
                }
            }
            return Ok(locs.last().map_or(f64::NAN, |l| l.0));
        }
        let lo_m = locs.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
        let hi_m = locs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (lo_m - 40.0 * sd, hi_m + 40.0 * sd);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.marginal_cdf(coord, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Checks the stored invariants: unit total weight and a symmetric PSD covariance.
    pub fn check_invariants(&self) -> bool {
        let total: f64 = self.weights.iter().sum();
        let c = &self.common_cov;
        let sym = (c - c.transpose()).amax() <= 1e-12 * (1.0 + c.amax());
        let eig = nalgebra::SymmetricEigen::new(c.clone()).eigenvalues;
        let tr = c.trace().abs();
        (total - 1.0).abs() <= 1e-12 && sym && eig.iter().all(|&e| e >= -1e-12 * tr.max(1e-300))
    }
}
