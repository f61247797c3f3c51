//! Grid representations of one- and two-dimensional homoskedastic Gaussian
//! mixture densities, built by linear binning and FFT kernel smoothing.

use nalgebra::DMatrix;

use super::fft::{convolve_1d, convolve_2d};
use crate::error::{PspfError, Result};
use crate::gaussian::normal_cdf;

/// Half-width of the grid in mixture standard deviations.
pub const GRID_HALF_WIDTH: f64 = 8.0;
/// Mixture mass outside the grid tolerated before the grid is widened.
pub const TRUNCATION_TOLERANCE: f64 = 1e-6;

/// What happened while placing a grid.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GridDiagnostics {
    /// Mixture mass outside the final grid.
    pub truncated_mass: f64,
    /// The default grid lost more than the tolerance and was widened.
    pub widened: bool,
    /// The widened grid still lost more than the tolerance.
    pub truncation_warning: bool,
}

impl GridDiagnostics {
    pub(crate) fn merge(self, other: Self) -> Self {
        Self {
            truncated_mass: self.truncated_mass.max(other.truncated_mass),
            widened: self.widened || other.widened,
            truncation_warning: self.truncation_warning || other.truncation_warning,
        }
    }
}

fn tail_mass(weights: &[f64], means: impl Iterator<Item = f64>, sd: f64, lo: f64, hi: f64) -> f64 {
    let mut mass = 0.0;
    for (w, m) in weights.iter().zip(means) {
        if sd == 0.0 {
            if m < lo || m > hi {
                mass += w;
            }
        } else {
            let (zl, zh) = ((lo - m) / sd, (hi - m) / sd);
            if zl > -9.0 {
                mass += w * normal_cdf(zl);
            }
            if zh < 9.0 {
                mass += w * normal_cdf(-zh);
            }
        }
    }
    mass
}

/// Chooses `[lo, hi]` for one axis: `center +- 8 spread`, widened once to
/// cover every component mean +- 8 kernel sd when more than the tolerated
/// mass falls outside.
fn place_axis(weights: &[f64], means: &[f64], kernel_sd: f64, center: f64, spread: f64) -> (f64, f64, GridDiagnostics) {
    let mut lo = center - GRID_HALF_WIDTH * spread;
    let mut hi = center + GRID_HALF_WIDTH * spread;
    let mut diag = GridDiagnostics {
        truncated_mass: tail_mass(weights, means.iter().copied(), kernel_sd, lo, hi),
        ..Default::default()
    };
    if diag.truncated_mass > TRUNCATION_TOLERANCE {
        let (min, max) = means
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (m, _)| (a.min(*m), b.max(*m)));
        lo = lo.min(min - GRID_HALF_WIDTH * kernel_sd);
        hi = hi.max(max + GRID_HALF_WIDTH * kernel_sd);
        diag.widened = true;
        diag.truncated_mass = tail_mass(weights, means.iter().copied(), kernel_sd, lo, hi);
        if diag.truncated_mass > TRUNCATION_TOLERANCE {
            diag.truncation_warning = true;
            log::warn!("continuous resampling grid truncates mass {:.3e}", diag.truncated_mass);
        }
    }
    (lo, hi, diag)
}

/// Adds `w` to the two grid points bracketing `pos` (in grid units),
/// proportionally to proximity. Positions off the grid are dropped.
fn bin_linear(pos: f64, g: usize) -> Option<(usize, f64)> {
    if !(pos >= 0.0 && pos <= (g - 1) as f64) {
        return None;
    }
    let j = (pos.floor() as usize).min(g - 2);
    Some((j, pos - j as f64))
}

/// A univariate density on a regular grid with its midpoint-rule CDF.
#[derive(Debug, Clone)]
pub struct Grid1D {
    pub lo: f64,
    pub hi: f64,
    /// Density at the grid points.
    pub values: Vec<f64>,
    /// `cdf[k]` is the CDF at the upper edge of the cell around point `k`;
    /// the last entry is exactly 1.
    pub cdf: Vec<f64>,
}

impl Grid1D {
    /// Grid density of `sum_i w_i N(x | m_i, var)` on `n_g` points.
    pub fn build(weights: &[f64], means: &[f64], var: f64, n_g: usize) -> Result<(Self, GridDiagnostics)> {
        if n_g < 4 {
            return Err(PspfError::InvalidArgument(format!("grid size {n_g} is below 4")));
        }
        let total: f64 = weights.iter().sum();
        let center = weights.iter().zip(means).map(|(w, m)| w * m).sum::<f64>() / total;
        let second = weights.iter().zip(means).map(|(w, m)| w * (m - center).powi(2)).sum::<f64>() / total;
        let spread = (second + var).sqrt();
        if !(spread > 0.0) || !spread.is_finite() {
            return Err(PspfError::InvalidArgument("mixture has no spread".into()));
        }
        let sd = var.sqrt();
        let (lo, hi, diag) = place_axis(weights, means, sd, center, spread);
        let dx = (hi - lo) / (n_g - 1) as f64;
        let mut counts = vec![0.0; n_g];
        for (w, m) in weights.iter().zip(means) {
            if let Some((j, f)) = bin_linear((m - lo) / dx, n_g) {
                counts[j] += w * (1.0 - f);
                counts[j + 1] += w * f;
            }
        }
        let mut kernel: Vec<f64> = (0..n_g)
            .map(|l| {
                if sd == 0.0 {
                    if l == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let z = l as f64 * dx / sd;
                    (-0.5 * z * z).exp()
                }
            })
            .collect();
        let ksum = kernel[0] + 2.0 * kernel[1..].iter().sum::<f64>();
        kernel.iter_mut().for_each(|k| *k /= ksum);
        let mass = convolve_1d(&counts, &kernel);
        let total_mass: f64 = mass.iter().sum();
        if !(total_mass > 0.0) {
            return Err(PspfError::InvalidArgument("grid carries no mass".into()));
        }
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = mass
            .iter()
            .map(|m| {
                acc += m;
                acc / total_mass
            })
            .collect();
        cdf[n_g - 1] = 1.0;
        let values = mass.iter().map(|m| m / (total_mass * dx)).collect();
        Ok((Self { lo, hi, values, cdf }, diag))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.spacing()
    }

    /// The piecewise-linear CDF at `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let dx = self.spacing();
        let pos = (x - self.lo) / dx + 0.5;
        if pos <= 0.0 {
            return 0.0;
        }
        let k = pos.floor() as usize;
        if k >= self.len() {
            return 1.0;
        }
        let prev = if k == 0 { 0.0 } else { self.cdf[k - 1] };
        prev + (pos - k as f64) * (self.cdf[k] - prev)
    }

    /// Inverts the CDF at nondecreasing `u` in `[0, 1)` in one pass.
    pub fn invert_sorted(&self, u: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
        let dx = self.spacing();
        let last = self.len() - 1;
        let mut k = 0;
        for ui in u {
            while k < last && self.cdf[k] <= ui {
                k += 1;
            }
            let prev = if k == 0 { 0.0 } else { self.cdf[k - 1] };
            let frac = ((ui - prev) / (self.cdf[k] - prev)).clamp(0.0, 1.0);
            out.push(self.point(k) - 0.5 * dx + frac * dx);
        }
    }
}

/// A bivariate density on a regular grid with per-column conditional CDFs of
/// the second coordinate.
#[derive(Debug, Clone)]
pub struct Grid2D {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub sizes: [usize; 2],
    /// Joint density, row-major with the first coordinate as row.
    pub density: Vec<f64>,
    /// Conditional CDFs of `x2 | x1 = point(0, i)`, row `i`, midpoint rule;
    /// columns without mass borrow the nearest column with mass.
    pub conditional_cdf: Vec<f64>,
}

impl Grid2D {
    /// Grid density of `sum_i w_i N(x | m_i, cov)`. A ridge of a quarter grid
    /// spacing (in sd) is added to the kernel so that singular `cov` is allowed.
    pub fn build(weights: &[f64], means: &[[f64; 2]], cov: &DMatrix<f64>, sizes: [usize; 2]) -> Result<(Self, GridDiagnostics)> {
        if sizes.iter().any(|g| *g < 4) {
            return Err(PspfError::InvalidArgument("grid sizes must be at least 4".into()));
        }
        let total: f64 = weights.iter().sum();
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut diag = GridDiagnostics::default();
        for k in 0..2 {
            let mk: Vec<f64> = means.iter().map(|m| m[k]).collect();
            let center = weights.iter().zip(&mk).map(|(w, m)| w * m).sum::<f64>() / total;
            let second = weights.iter().zip(&mk).map(|(w, m)| w * (m - center).powi(2)).sum::<f64>() / total;
            let spread = (second + cov[(k, k)]).sqrt();
            if !(spread > 0.0) || !spread.is_finite() {
                return Err(PspfError::InvalidArgument("mixture has no spread along an axis".into()));
            }
            let (l, h, d) = place_axis(weights, &mk, cov[(k, k)].sqrt(), center, spread);
            lo[k] = l;
            hi[k] = h;
            diag = diag.merge(d);
        }
        let [g1, g2] = sizes;
        let dx = [(hi[0] - lo[0]) / (g1 - 1) as f64, (hi[1] - lo[1]) / (g2 - 1) as f64];
        let mut counts = vec![0.0; g1 * g2];
        for (w, m) in weights.iter().zip(means) {
            let (Some((i, fi)), Some((j, fj))) = (
                bin_linear((m[0] - lo[0]) / dx[0], g1),
                bin_linear((m[1] - lo[1]) / dx[1], g2),
            ) else {
                continue;
            };
            counts[i * g2 + j] += w * (1.0 - fi) * (1.0 - fj);
            counts[i * g2 + j + 1] += w * (1.0 - fi) * fj;
            counts[(i + 1) * g2 + j] += w * fi * (1.0 - fj);
            counts[(i + 1) * g2 + j + 1] += w * fi * fj;
        }
        // Kernel in grid units.
        let s11 = cov[(0, 0)] / (dx[0] * dx[0]) + 1.0 / 16.0;
        let s22 = cov[(1, 1)] / (dx[1] * dx[1]) + 1.0 / 16.0;
        let s12 = 0.5 * (cov[(0, 1)] + cov[(1, 0)]) / (dx[0] * dx[1]);
        let det = s11 * s22 - s12 * s12;
        let (p11, p22, p12) = (s22 / det, s11 / det, -s12 / det);
        let raw = |a: i64, b: i64| {
            let (a, b) = (a as f64, b as f64);
            (-0.5 * (p11 * a * a + 2.0 * p12 * a * b + p22 * b * b)).exp()
        };
        let mut ksum = 0.0;
        for a in -(g1 as i64 - 1)..g1 as i64 {
            for b in -(g2 as i64 - 1)..g2 as i64 {
                ksum += raw(a, b);
            }
        }
        let mass = convolve_2d(&counts, g1, g2, |a, b| raw(a, b) / ksum);
        let total_mass: f64 = mass.iter().sum();
        if !(total_mass > 0.0) {
            return Err(PspfError::InvalidArgument("grid carries no mass".into()));
        }
        let cell = dx[0] * dx[1];
        let density: Vec<f64> = mass.iter().map(|m| m / (total_mass * cell)).collect();

        let mut conditional_cdf = vec![0.0; g1 * g2];
        let mut has_mass = vec![false; g1];
        for i in 0..g1 {
            let row = &mass[i * g2..(i + 1) * g2];
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                has_mass[i] = true;
                let mut acc = 0.0;
                for (c, m) in conditional_cdf[i * g2..(i + 1) * g2].iter_mut().zip(row) {
                    acc += m;
                    *c = acc / s;
                }
                conditional_cdf[(i + 1) * g2 - 1] = 1.0;
            }
        }
        for i in 0..g1 {
            if has_mass[i] {
                continue;
            }
            let nearest = (0..g1)
                .filter(|k| has_mass[*k])
                .min_by_key(|k| k.abs_diff(i))
                .expect("grid has mass");
            let src = conditional_cdf[nearest * g2..(nearest + 1) * g2].to_vec();
            conditional_cdf[i * g2..(i + 1) * g2].copy_from_slice(&src);
        }
        Ok((
            Self {
                lo,
                hi,
                sizes,
                density,
                conditional_cdf,
            },
            diag,
        ))
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.sizes[axis] - 1) as f64
    }

    pub fn point(&self, axis: usize, k: usize) -> f64 {
        self.lo[axis] + k as f64 * self.spacing(axis)
    }

    /// Inverts the conditional CDF of `x2 | x1` at `u`, interpolating linearly
    /// between the two grid columns adjacent to `x1`.
    pub fn sample_conditional(&self, x1: f64, u: f64) -> f64 {
        let [g1, g2] = self.sizes;
        let pos = ((x1 - self.lo[0]) / self.spacing(0)).clamp(0.0, (g1 - 1) as f64);
        let i = (pos.floor() as usize).min(g1 - 2);
        let f = pos - i as f64;
        let a = &self.conditional_cdf[i * g2..(i + 1) * g2];
        let b = &self.conditional_cdf[(i + 1) * g2..(i + 2) * g2];
        let c = |j: usize| (1.0 - f) * a[j] + f * b[j];
        // First column index whose interpolated CDF exceeds u; c(g2 - 1) = 1.
        let (mut lo, mut hi) = (0, g2 - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if c(mid) <= u {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        let prev = if k == 0 { 0.0 } else { c(k - 1) };
        let frac = ((u - prev) / (c(k) - prev)).clamp(0.0, 1.0);
        let dx = self.spacing(1);
        self.point(1, k) - 0.5 * dx + frac * dx
    }
}
