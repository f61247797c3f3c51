//! Derivative-free minimizers: bounded Brent search in one dimension and a
//! finite-difference quasi-Newton method for smooth multivariate objectives.

use nalgebra::{DMatrix, DVector};

/// Result of [`minimize_bounded`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Brent's golden-section/parabolic search for a minimum of `f` on `[lo, hi]`.
///
/// Stops when the bracket shrinks below `2 * (sqrt(eps) |x| + xatol / 3)`
/// or after `max_evals` evaluations. Non-finite values are treated as `+inf`.
pub fn minimize_bounded<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xatol: f64, max_evals: usize) -> ScalarMinimum {
    assert!(lo <= hi, "empty interval");
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (lo, hi);
    let mut v = a + golden * (b - a);
    let mut w = v;
    let mut x = v;
    let mut fx = eval(x);
    let (mut fv, mut fw) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut evals = 1;
    let mut converged = false;
    while evals < max_evals {
        let xm = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xatol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            converged = true;
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = eval(u);
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    ScalarMinimum {
        x,
        value: fx,
        evaluations: evals,
        converged,
    }
}

/// Options for [`minimize_quasi_newton`].
#[derive(Debug, Clone, Copy)]
pub struct QuasiNewtonOptions {
    pub max_iters: usize,
    /// Stop when the gradient sup-norm falls below this.
    pub grad_tol: f64,
    /// Stop when a step changes the objective by less than this.
    pub f_tol: f64,
    /// Relative step of the central-difference gradient.
    pub fd_step: f64,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-5,
            f_tol: 1e-9,
            fd_step: 1e-4,
        }
    }
}

/// Result of [`minimize_quasi_newton`].
#[derive(Debug, Clone)]
pub struct VectorMinimum {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn fd_step(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

/// Central-difference gradient.
pub fn numerical_gradient<F: FnMut(&DVector<f64>) -> f64>(f: &mut F, x: &DVector<f64>, rel_step: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for k in 0..x.len() {
        let h = fd_step(x[k], rel_step);
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        g[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Finite-difference Hessian from function values only, symmetrized.
///
/// `f(x)` itself is never used: an optimizer on a function with small jumps
/// tends to stop on the high side of one, which would bias every curvature.
/// The diagonal uses `(f(x+2h) + f(x-2h) - f(x+h) - f(x-h)) / 3h^2`.
pub fn numerical_hessian<F: FnMut(&DVector<f64>) -> f64>(f: &mut F, x: &DVector<f64>, rel_step: f64) -> DMatrix<f64> {
    let d = x.len();
    let h: Vec<f64> = x.iter().map(|v| fd_step(*v, rel_step)).collect();
    let mut hess = DMatrix::zeros(d, d);
    let mut xp = x.clone();
    for i in 0..d {
        let mut at = |m: f64| {
            xp[i] = x[i] + m * h[i];
            let v = f(&xp);
            xp[i] = x[i];
            v
        };
        let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
        hess[(i, i)] = (p2 + m2 - p1 - m1) / (3.0 * h[i] * h[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

const MAX_WIDENINGS: usize = 2;

/// Stall recovery: reset a used metric first, then widen the difference step.
struct Recovery {
    fd_rel: f64,
    widenings: usize,
    fresh: bool,
}

impl Recovery {
    fn attempt<F: FnMut(&DVector<f64>) -> f64>(&mut self, obj: &mut F, x: &DVector<f64>, g: &mut DVector<f64>, h_inv: &mut DMatrix<f64>) -> bool {
        if self.fresh {
            if self.widenings == MAX_WIDENINGS {
                return false;
            }
            self.widenings += 1;
            self.fd_rel *= 10.0;
            *g = numerical_gradient(obj, x, self.fd_rel);
        }
        *h_inv = DMatrix::identity(x.len(), x.len()) / g.norm().max(1.0);
        self.fresh = true;
        true
    }
}

/// BFGS with backtracking Armijo line search and central-difference gradients.
/// A stall (failed line search, or no progress with a large gradient) restarts
/// the metric; a stall right after a restart widens the difference step
/// tenfold, at most twice.
/// Non-finite objective values are treated as `+inf`.
pub fn minimize_quasi_newton<F: FnMut(&DVector<f64>) -> f64>(mut f: F, x0: DVector<f64>, opts: &QuasiNewtonOptions) -> VectorMinimum {
    let d = x0.len();
    let mut evals = 0usize;
    let mut obj = |x: &DVector<f64>| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut x = x0;
    let mut fx = obj(&x);
    let mut g = numerical_gradient(&mut obj, &x, opts.fd_step);
    let mut h_inv = DMatrix::<f64>::identity(d, d);
    let mut converged = false;
    let mut rec = Recovery {
        fd_rel: opts.fd_step,
        widenings: 0,
        fresh: true,
    };
    let mut iters = 0;
    while iters < opts.max_iters {
        iters += 1;
        if g.amax() < opts.grad_tol {
            converged = true;
            break;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h_inv = DMatrix::identity(d, d);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = &x + &dir * t;
            let fn_ = obj(&xn);
            if fn_ <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if !rec.attempt(&mut obj, &x, &mut g, &mut h_inv) {
                break;
            }
            continue;
        };
        rec.fresh = false;
        let gn = numerical_gradient(&mut obj, &xn, rec.fd_rel);
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if iters == 1 && sy > 0.0 {
            h_inv *= sy / yv.dot(&yv);
        }
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(d, d);
            let left = &i - &s * yv.transpose() * rho;
            let right = &i - &yv * s.transpose() * rho;
            h_inv = &left * &h_inv * &right + &s * s.transpose() * rho;
        }
        let df = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        if df.abs() < opts.f_tol * (1.0 + fx.abs()) {
            converged = g.amax() < opts.grad_tol.sqrt();
            if converged || !rec.attempt(&mut obj, &x, &mut g, &mut h_inv) {
                break;
            }
        }
    }
    VectorMinimum {
        x,
        value: fx,
        iterations: iters,
        evaluations: evals,
        converged,
    }
}
