//! Small dense linear algebra on top of `nalgebra`.
//!
//! Every SPD factorization in the crate goes through [`cholesky_jittered`]:
//! a plain Cholesky attempt, then a single retry with `1e-10 * trace / d`
//! added to the diagonal, then an error naming the matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{PspfError, Result};

/// Weights `exp(l_i - logsumexp(l))` scaled to sum to one, together with the
/// log-sum-exp. `None` when every log weight is `-inf`.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let lse = logsumexp(log_w);
    if !lse.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - lse).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Some((w, lse))
}

/// Relative size of the one-shot diagonal jitter.
pub const JITTER_SCALE: f64 = 1e-10;

pub fn cholesky_jittered(m: &DMatrix<f64>, name: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(PspfError::Shape(format!(
            "`{name}` is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PspfError::SingularCovariance { name });
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let d = m.nrows().max(1) as f64;
    let jitter = JITTER_SCALE * m.trace() / d;
    if jitter > 0.0 {
        let mut j = m.clone();
        for i in 0..m.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            log::debug!("`{name}` needed diagonal jitter {jitter:e}");
            return Ok(c);
        }
    }
    Err(PspfError::SingularCovariance { name })
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// A matrix `L` with `L L^T = m` for a symmetric PSD `m`.
///
/// Uses Cholesky when it succeeds and falls back to an eigendecomposition
/// with negative eigenvalues clamped to zero (so a zero matrix maps to zero).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return c.l();
    }
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut l = eig.eigenvectors.clone();
    for j in 0..n {
        let s = eig.eigenvalues[j].max(0.0).sqrt();
        for i in 0..n {
            l[(i, j)] *= s;
        }
    }
    l
}

/// `log(sum(exp(v)))` without overflow; `-inf` for an empty or all `-inf` input.
pub fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `out = a * x` for a dense matrix and a slice, written without allocation.
#[inline]
pub fn mat_vec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(a.nrows(), out.len());
    for (r, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (c, xc) in x.iter().enumerate() {
            s += a[(r, c)] * xc;
        }
        *o = s;
    }
}

pub fn to_vector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// `a * b * a^T`.
pub fn sandwich(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a * b * a.transpose();
    symmetrize(&mut out);
    out
}
