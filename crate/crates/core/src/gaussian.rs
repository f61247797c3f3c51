//! Multivariate Gaussian densities.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{PspfError, Result};
use crate::linalg::cholesky_jittered;

/// A factorized covariance for repeated density evaluation.
///
/// Holds the lower Cholesky factor and the constant `-0.5 * log|2 pi S|`, so a
/// log-density costs one triangular solve.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianFactor {
    pub fn new(cov: &DMatrix<f64>, name: &'static str) -> Result<Self> {
        let chol = cholesky_jittered(cov, name)?;
        let chol_l = chol.l();
        let d = cov.nrows() as f64;
        let log_det: f64 = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            chol_l,
            log_norm: -0.5 * (d * (2.0 * PI).ln() + log_det),
        })
    }

    pub fn dim(&self) -> usize {
        self.chol_l.nrows()
    }

    /// `log|S|`.
    pub fn log_det(&self) -> f64 {
        -2.0 * self.log_norm - self.dim() as f64 * (2.0 * PI).ln()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// `r^T S^{-1} r`.
    #[inline]
    pub fn mahalanobis_sq(&self, r: &[f64]) -> f64 {
        let d = self.chol_l.nrows();
        debug_assert_eq!(r.len(), d);
        // forward substitution L z = r, accumulating |z|^2
        let mut z = [0.0f64; 16];
        let mut buf;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            buf = vec![0.0; d];
            &mut buf
        };
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = r[i];
            for k in 0..i {
                s -= self.chol_l[(i, k)] * z[k];
            }
            let zi = s / self.chol_l[(i, i)];
            z[i] = zi;
            acc += zi * zi;
        }
        acc
    }

    /// `log N(r | 0, S)`.
    #[inline]
    pub fn log_density_residual(&self, r: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(r)
    }

    /// `S^{-1} b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .chol_l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal");
        self.chol_l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor has a nonzero diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        DVector::from_column_slice(self.solve(&m).as_slice())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.dim(), self.dim()))
    }
}

/// `log N(x | mean, cov)` via a Cholesky factorization of `cov`.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() || cov.ncols() != x.len() {
        return Err(PspfError::Shape(format!(
            "x has {} entries, mean {}, cov {}x{}",
            x.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let f = GaussianFactor::new(cov, "cov")?;
    let r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    Ok(f.log_density_residual(&r))
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Scalar normal log-density.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}
