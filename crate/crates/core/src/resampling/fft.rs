//! Linear (non-circular) convolution of binned counts with a symmetric kernel.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// `out[k] = sum_j counts[j] kernel[|k - j|]` for `k < counts.len()`, where
/// `kernel[l]` is given for `0 <= l < counts.len()`.
pub(crate) fn convolve_1d(counts: &[f64], kernel: &[f64]) -> Vec<f64> {
    let g = counts.len();
    let len = (2 * g).next_power_of_two();
    let mut data: Vec<Complex<f64>> = (0..len).map(|k| Complex::new(counts.get(k).copied().unwrap_or(0.0), 0.0)).collect();
    let mut kern = vec![Complex::new(0.0, 0.0); len];
    for (l, &v) in kernel.iter().enumerate() {
        kern[l].re = v;
        if l > 0 {
            kern[len - l].re = v;
        }
    }
    let fwd = plan(len, false);
    fwd.process(&mut data);
    fwd.process(&mut kern);
    for (d, k) in data.iter_mut().zip(&kern) {
        *d *= k;
    }
    plan(len, true).process(&mut data);
    let scale = 1.0 / len as f64;
    data[..g].iter().map(|c| (c.re * scale).max(0.0)).collect()
}

fn transform_2d(data: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    let row_fft = plan(cols, inverse);
    for r in data.chunks_exact_mut(cols) {
        row_fft.process(r);
    }
    let col_fft = plan(rows, inverse);
    let mut buf = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            buf[r] = data[r * cols + c];
        }
        col_fft.process(&mut buf);
        for r in 0..rows {
            data[r * cols + c] = buf[r];
        }
    }
}

/// Two-dimensional analogue of [`convolve_1d`]. `counts` is `g1 x g2`
/// row-major; `kernel(l1, l2)` is evaluated for `|l1| < g1`, `|l2| < g2`.
pub(crate) fn convolve_2d(counts: &[f64], g1: usize, g2: usize, kernel: impl Fn(i64, i64) -> f64) -> Vec<f64> {
    let (r, c) = ((2 * g1).next_power_of_two(), (2 * g2).next_power_of_two());
    let mut data = vec![Complex::new(0.0, 0.0); r * c];
    for i in 0..g1 {
        for j in 0..g2 {
            data[i * c + j].re = counts[i * g2 + j];
        }
    }
    let mut kern = vec![Complex::new(0.0, 0.0); r * c];
    for l1 in -(g1 as i64 - 1)..g1 as i64 {
        let i = l1.rem_euclid(r as i64) as usize;
        for l2 in -(g2 as i64 - 1)..g2 as i64 {
            let j = l2.rem_euclid(c as i64) as usize;
            kern[i * c + j].re = kernel(l1, l2);
        }
    }
    transform_2d(&mut data, r, c, false);
    transform_2d(&mut kern, r, c, false);
    for (d, k) in data.iter_mut().zip(&kern) {
        *d *= k;
    }
    transform_2d(&mut data, r, c, true);
    let scale = 1.0 / (r * c) as f64;
    let mut out = vec![0.0; g1 * g2];
    for i in 0..g1 {
        for j in 0..g2 {
            out[i * g2 + j] = (data[i * c + j].re * scale).max(0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum_1d() {
        let counts = [0.0, 1.0, 0.5, 0.0, 2.0, 0.25];
        let kernel = [0.5, 0.2, 0.05, 0.01, 0.0, 0.0];
        let fast = convolve_1d(&counts, &kernel);
        for k in 0..counts.len() {
            let direct: f64 = (0..counts.len()).map(|j| counts[j] * kernel[(k as i64 - j as i64).unsigned_abs() as usize]).sum();
            assert!((fast[k] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_direct_sum_2d() {
        let (g1, g2) = (4, 3);
        let counts: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64).collect();
        let kern = |a: i64, b: i64| (-(a * a) as f64 * 0.3 - (b * b) as f64 * 0.5 - (a * b) as f64 * 0.2).exp();
        let fast = convolve_2d(&counts, g1, g2, kern);
        for i in 0..g1 {
            for j in 0..g2 {
                let mut direct = 0.0;
                for p in 0..g1 {
                    for q in 0..g2 {
                        direct += counts[p * g2 + q] * kern(i as i64 - p as i64, j as i64 - q as i64);
                    }
                }
                assert!((fast[i * g2 + j] - direct).abs() < 1e-12);
            }
        }
    }
}
