//! Drawing equally weighted swarms from weighted particle sets and from
//! homoskedastic Gaussian mixtures.
//!
//! [`sample_mixture_direct`] and [`resample_multinomial`] pick components
//! multinomially and are therefore discontinuous in the model parameters.
//! The grid-based continuous resamplers invert smooth CDFs at common random
//! numbers instead, so that the simulated likelihood is continuous.

mod fft;
mod grid;

pub use grid::{Grid1D, Grid2D, GridDiagnostics, GRID_HALF_WIDTH, TRUNCATION_TOLERANCE};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{PspfError, Result};
use crate::linalg::{mat_vec, psd_sqrt};
use crate::mixture::HomoskedasticGaussianMixture;
use crate::rng::StreamRng;
use crate::swarm::Swarm;

pub const DEFAULT_GRID_1D: usize = 1024;
pub const DEFAULT_GRID_2D: usize = 256;

/// `n` multinomial draws of indices with probabilities proportional to
/// `weights`, returned in ascending order.
///
/// Uses one pass over sorted uniforms generated from exponential spacings.
pub fn multinomial_indices(weights: &[f64], n: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let mut total = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0) || !w.is_finite() {
            return Err(PspfError::Domain {
                name: "resampling weight",
                value: w,
                allowed: "[0, inf)",
            });
        }
        if w > 0.0 {
            last_positive = Some(i);
        }
        total += w;
    }
    let Some(last) = last_positive else {
        return Err(PspfError::InvalidArgument("resampling weights are all zero".into()));
    };
    let spacings: Vec<f64> = (0..=n).map(|_| Exp1.sample(rng)).collect();
    let scale = total / spacings.iter().sum::<f64>();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut cum = weights[0];
    let mut s = 0.0;
    for e in &spacings[..n] {
        s += e;
        let u = s * scale;
        while (u > cum || weights[j] == 0.0) && j < last {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    Ok(out)
}

/// Multinomial resampling of `locations` with probabilities proportional to `weights`.
pub fn resample_multinomial(weights: &[f64], locations: &Swarm, n: usize, rng: &mut StreamRng) -> Result<Swarm> {
    if weights.len() != locations.n() {
        return Err(PspfError::Shape(format!(
            "{} weights for {} locations",
            weights.len(),
            locations.n()
        )));
    }
    let idx = multinomial_indices(weights, n, rng)?;
    let mut out = Swarm::zeros(n, locations.dim());
    for (row, &i) in out.iter_mut().zip(&idx) {
        row.copy_from_slice(locations.particle(i));
    }
    Ok(out)
}

/// Component choice by [`multinomial_indices`] followed by a Gaussian draw
/// around the chosen mean. With zero common covariance no normals are drawn
/// and the result coincides with [`resample_multinomial`] of the means.
pub fn sample_mixture_direct(mix: &HomoskedasticGaussianMixture, n: usize, rng: &mut StreamRng) -> Result<Swarm> {
    let idx = multinomial_indices(mix.weights(), n, rng)?;
    let d = mix.dim();
    let mut out = Swarm::zeros(n, d);
    for (row, &i) in out.iter_mut().zip(&idx) {
        row.copy_from_slice(mix.means().particle(i));
    }
    if mix.common_cov().iter().all(|v| *v == 0.0) {
        return Ok(out);
    }
    let lower = psd_sqrt(mix.common_cov());
    let mut z = vec![0.0; d];
    let mut e = vec![0.0; d];
    for row in out.iter_mut() {
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        mat_vec(&lower, &z, &mut e);
        for (x, ek) in row.iter_mut().zip(&e) {
            *x += ek;
        }
    }
    Ok(out)
}

fn constant_swarm(mix: &HomoskedasticGaussianMixture, n: usize) -> Swarm {
    let (mean, _) = mix.moments();
    let mut out = Swarm::zeros(n, mix.dim());
    for row in out.iter_mut() {
        row.copy_from_slice(mean.as_slice());
    }
    out
}

/// Stratified uniforms `(i + u) / n`, `i = 0..n`, sharing one offset `u`.
fn stratified(n: usize, u: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| (i as f64 + u) / n as f64)
}

/// Continuous resampling of a univariate mixture by CDF inversion on an
/// `n_g`-point grid at stratified uniforms. The output is sorted.
pub fn resample_continuous_1d(
    mix: &HomoskedasticGaussianMixture,
    n: usize,
    n_g: usize,
    rng: &mut StreamRng,
) -> Result<(Swarm, GridDiagnostics)> {
    if mix.dim() != 1 {
        return Err(PspfError::Shape(format!("1-d resampler given a {}-d mixture", mix.dim())));
    }
    let u: f64 = rng.random();
    let (_, cov) = mix.moments();
    if cov[(0, 0)] <= 0.0 {
        return Ok((constant_swarm(mix, n), GridDiagnostics::default()));
    }
    let (grid, diag) = Grid1D::build(mix.weights(), mix.means().as_flat(), mix.common_cov()[(0, 0)], n_g)?;
    let mut out = Vec::with_capacity(n);
    grid.invert_sorted(stratified(n, u), &mut out);
    Ok((Swarm::from_flat(1, out)?, diag))
}

/// Continuous resampling of a bivariate mixture: the first coordinate by the
/// univariate algorithm on its marginal (grid of `4 g1` points), the second
/// by inversion of the conditional CDFs of a `g1 x g2` joint grid at
/// independent uniforms.
pub fn resample_continuous_2d(
    mix: &HomoskedasticGaussianMixture,
    n: usize,
    sizes: [usize; 2],
    rng: &mut StreamRng,
) -> Result<(Swarm, GridDiagnostics)> {
    if mix.dim() != 2 {
        return Err(PspfError::Shape(format!("2-d resampler given a {}-d mixture", mix.dim())));
    }
    let (_, cov) = mix.moments();
    if cov[(0, 0)] <= 0.0 && cov[(1, 1)] <= 0.0 {
        return Ok((constant_swarm(mix, n), GridDiagnostics::default()));
    }
    if cov[(0, 0)] <= 0.0 || cov[(1, 1)] <= 0.0 {
        return Err(PspfError::Unsupported("continuous resampling of a mixture degenerate along one axis"));
    }
    let (first, d1) = resample_continuous_1d(&mix.marginal(&[0])?, n, 4 * sizes[0], rng)?;
    let means: Vec<[f64; 2]> = mix.means().iter().map(|m| [m[0], m[1]]).collect();
    let (grid, d2) = Grid2D::build(mix.weights(), &means, mix.common_cov(), sizes)?;
    let mut out = Vec::with_capacity(2 * n);
    for &x1 in first.as_flat() {
        let u: f64 = rng.random();
        out.push(x1);
        out.push(grid.sample_conditional(x1, u));
    }
    Ok((Swarm::from_flat(2, out)?, d1.merge(d2)))
}
