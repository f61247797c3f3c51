use nalgebra::{DMatrix, DVector};

use crate::error::{PspfError, Result};

/// `n` equally weighted particles of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Swarm {
    dim: usize,
    data: Vec<f64>,
}

impl Swarm {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; n * dim],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(PspfError::Shape(format!(
                "{} values cannot form rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PspfError::Shape("ragged particle rows".into()));
        }
        Self::from_flat(dim, rows.concat())
    }

    pub fn n(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn particle_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn iter_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    /// Column `k` as a vector.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.iter().map(|p| p[k]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Empirical mean and covariance, the latter with divisor `n`.
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n();
        if n < 2 {
            return Err(PspfError::InsufficientSample {
                required: 2,
                actual: n,
            });
        }
        Ok(weighted_moments(self, None))
    }
}

/// Mean and covariance (divisor = total weight) of a possibly weighted set of points.
///
/// Two-pass so that a swarm of identical points has exactly zero covariance.
pub(crate) fn weighted_moments(points: &Swarm, weights: Option<&[f64]>) -> (DVector<f64>, DMatrix<f64>) {
    let d = points.dim();
    let n = points.n();
    let mut mean = vec![0.0; d];
    let mut total = 0.0;
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        total += w;
        for (m, x) in mean.iter_mut().zip(points.particle(i)) {
            *m += w * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    // One refinement pass removes the rounding error of the first.
    let mut corr = vec![0.0; d];
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        for ((c, x), m) in corr.iter_mut().zip(points.particle(i)).zip(&mean) {
            *c += w * (x - m);
        }
    }
    for (m, c) in mean.iter_mut().zip(&corr) {
        *m += c / total;
    }
    let mut cov = vec![0.0; d * d];
    let mut r = vec![0.0; d];
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        for ((rk, x), m) in r.iter_mut().zip(points.particle(i)).zip(&mean) {
            *rk = x - m;
        }
        for a in 0..d {
            let wa = w * r[a];
            for b in a..d {
                cov[a * d + b] += wa * r[b];
            }
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / total;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    (DVector::from_vec(mean), c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Purpose};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn symmetric_pair() {
        let s = Swarm::from_flat(1, vec![-1.0, 1.0]).unwrap();
        let (m, c) = s.moments().unwrap();
        assert_eq!(m[0], 0.0);
        assert_eq!(c[(0, 0)], 1.0);
    }

    #[test]
    fn identical_particles_have_zero_cov() {
        let s = Swarm::from_rows(&vec![vec![0.3, -1.7, 2.2]; 17]).unwrap();
        let (_, c) = s.moments().unwrap();
        assert_eq!(c.abs().max(), 0.0);
    }

    #[test]
    fn single_particle_is_an_error() {
        let s = Swarm::from_flat(2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            s.moments(),
            Err(PspfError::InsufficientSample { required: 2, actual: 1 })
        ));
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = stream_rng(11, Purpose::Test, 0);
        let data: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = Swarm::from_flat(3, data).unwrap();
        let (m, c) = s.moments().unwrap();
        assert!(m.amax() < 0.15);
        assert!((c - DMatrix::<f64>::identity(3, 3)).amax() < 0.2);
    }

    proptest! {
        #[test]
        fn affine_equivariance(
            seed in 0u64..1000,
            a in proptest::collection::vec(-2.0f64..2.0, 4),
            c in proptest::collection::vec(-5.0f64..5.0, 2),
        ) {
            let mut rng = stream_rng(seed, Purpose::Test, 1);
            let data: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
            let s = Swarm::from_flat(2, data).unwrap();
            let a = DMatrix::from_row_slice(2, 2, &a);
            let c = DVector::from_vec(c);
            let mut t = s.clone();
            for p in t.iter_mut() {
                let v = &a * DVector::from_column_slice(p) + &c;
                p.copy_from_slice(v.as_slice());
            }
            let (m, cov) = s.moments().unwrap();
            let (mt, covt) = t.moments().unwrap();
            prop_assert!((mt - (&a * m + &c)).amax() < 1e-12);
            prop_assert!((covt - &a * cov * a.transpose()).amax() < 1e-12);
        }
    }
}
