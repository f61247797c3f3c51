//! Closed-form approximate MSE of the likelihood estimate as a function of `b`.
//!
//! All quantities live in the observation space: with `A = M Sigma_hat M^T`,
//! `B_l = M Sigma_l M^T` and `At = M Sigma_tilde M^T`,
//!
//! ```text
//! f0 = sum_l q_l N(y | a M mu + b M mu_l, S_eps + b^2 B_l + (a^2/n) A + G' At)
//! f1 = N(y | M mu, S_eps + (b^2 + a^2/n) A + G' At)
//! f2 = N(y | M mu, S_eps/2 + (b^2 + a^2/n) A + G'/2 At) / ((4 pi)^(dy/2) |S_eps + G' At|^(1/2))
//! f3 = N(y | M mu, S_eps/2 + (b^2/2 + a^2/n) A + G'/2 At) / ((4 pi)^(dy/2) |S_eps + b^2 A + G' At|^(1/2))
//! ```
//!
//! Everything is evaluated in log space. The criterion is reported relative to
//! a `b`-independent scale `exp(2 s)` so that tail observations, for which
//! every term underflows, still order the candidates correctly.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use super::pilot::{BiasPilot, VariancePilot};
use crate::error::{PspfError, Result};
use crate::gaussian::GaussianFactor;
use crate::linalg::{logsumexp, sandwich, symmetrize};
use crate::model::LinearObservation;
use crate::ps_update::ShrinkageParams;

struct BiasComponent {
    log_q: f64,
    m_mean: DVector<f64>,
    m_cov: DMatrix<f64>,
}

/// Precomputed observation-space quantities shared by all `b`.
pub struct CriterionContext {
    n: f64,
    dim_obs: usize,
    measurement: DMatrix<f64>,
    sigma_eps: DMatrix<f64>,
    sigma_hat: DMatrix<f64>,
    y: DVector<f64>,
    y_bar: DVector<f64>,
    a_mat: DMatrix<f64>,
    bias: Vec<BiasComponent>,
    log_rho_b: f64,
    log_scale: f64,
}

impl CriterionContext {
    pub fn new(y: &[f64], obs: &LinearObservation, n: usize, variance: &VariancePilot, bias: &BiasPilot) -> Result<Self> {
        let m = obs.matrix();
        if y.len() != obs.dim_obs() || variance.mean.len() != obs.dim_state() || bias.dim() != obs.dim_state() {
            return Err(PspfError::Shape("criterion inputs have inconsistent dimensions".into()));
        }
        if n < 2 {
            return Err(PspfError::InsufficientSample { required: 2, actual: n });
        }
        let y = DVector::from_column_slice(y);
        let y_bar = &y - m * &variance.mean;
        let a_mat = sandwich(m, &variance.cov);
        let mut comps = Vec::with_capacity(2);
        let mut rho_terms = Vec::with_capacity(2);
        for l in 0..2 {
            if bias.weights[l] <= 0.0 {
                continue;
            }
            let c = BiasComponent {
                log_q: bias.weights[l].ln(),
                m_mean: m * &bias.means[l],
                m_cov: sandwich(m, &bias.covs[l]),
            };
            let cov = obs.cov() + &c.m_cov;
            rho_terms.push(c.log_q + log_normal(&(&y - &c.m_mean), &cov, "Sigma_eps + M Sigma_l M^T")?);
            comps.push(c);
        }
        let mut ctx = Self {
            n: n as f64,
            dim_obs: obs.dim_obs(),
            measurement: m.clone(),
            sigma_eps: obs.cov().clone(),
            sigma_hat: variance.cov.clone(),
            y,
            y_bar,
            a_mat,
            bias: comps,
            log_rho_b: logsumexp(&rho_terms),
            log_scale: 0.0,
        };
        let a = ctx.a_mat.clone();
        let end0 = ctx.log_f_all(&ShrinkageParams::new(0.0)?, &a)?.f1;
        let end1 = ctx.log_f_all(&ShrinkageParams::new(1.0)?, &a)?.f1;
        ctx.log_scale = ctx.log_rho_b.max(end0).max(end1);
        if !ctx.log_scale.is_finite() {
            ctx.log_scale = 0.0;
        }
        Ok(ctx)
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    /// `log rho_B = log sum_l q_l N(y | M mu_l, S_eps + M Sigma_l M^T)`.
    pub fn log_rho_b(&self) -> f64 {
        self.log_rho_b
    }

    /// The `b`-independent log scale `s` used by [`CriterionTerms`].
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    fn slot(&self, sigma_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if sigma_tilde.shape() != self.sigma_hat.shape() {
            return Err(PspfError::Shape("Sigma_tilde has the wrong shape".into()));
        }
        Ok(sandwich(&self.measurement, sigma_tilde))
    }

    fn log_f_all(&self, p: &ShrinkageParams, at: &DMatrix<f64>) -> Result<LogF> {
        let (a, b, g) = (p.a, p.b, p.g_prime);
        let an = a * a / self.n;
        let base = &self.sigma_eps + at * g;

        let mut f0_terms = Vec::with_capacity(self.bias.len());
        for c in &self.bias {
            let mean = self.measurement_mean(a) + &c.m_mean * b;
            let cov = &base + &c.m_cov * (b * b) + &self.a_mat * an;
            f0_terms.push(c.log_q + log_normal(&(&self.y - mean), &cov, "f0 covariance")?);
        }
        let f0 = logsumexp(&f0_terms);

        let f1 = log_normal(&self.y_bar, &(&base + &self.a_mat * (b * b + an)), "f1 covariance")?;

        let half_log_4pi = 0.5 * self.dim_obs as f64 * (4.0 * PI).ln();
        let half = &self.sigma_eps * 0.5 + at * (0.5 * g);
        let f2 = log_normal(&self.y_bar, &(&half + &self.a_mat * (b * b + an)), "f2 covariance")?
            - half_log_4pi
            - 0.5 * log_det(&base, "Sigma_eps + G' M Sigma_tilde M^T")?;
        let f3 = log_normal(&self.y_bar, &(&half + &self.a_mat * (0.5 * b * b + an)), "f3 covariance")?
            - half_log_4pi
            - 0.5 * log_det(&(&base + &self.a_mat * (b * b)), "Sigma_eps + b^2 A + G' At")?;
        Ok(LogF { f0, f1, f2, f3 })
    }

    fn measurement_mean(&self, a: f64) -> DVector<f64> {
        (&self.y - &self.y_bar) * a
    }

    /// `tr[(f1_breve Sigma_hat)^2]` with `F = S_eps + (1 + a^2/n) A`.
    fn trace_term(&self, p: &ShrinkageParams) -> Result<f64> {
        let f = &self.sigma_eps + &self.a_mat * (1.0 + p.a * p.a / self.n);
        let fac = GaussianFactor::new(&f, "F")?;
        let u = fac.solve_vec(&self.y_bar);
        let bm = &u * u.transpose() - fac.inverse();
        let ba = &bm * &self.a_mat;
        Ok((&ba * &ba).trace())
    }

    /// Log values of `f0..f3` at `b` with `Sigma_tilde` in the covariance slot.
    pub fn log_f(&self, b: f64, sigma_tilde: &DMatrix<f64>) -> Result<LogF> {
        let p = ShrinkageParams::new(b)?;
        self.log_f_all(&p, &self.slot(sigma_tilde)?)
    }

    /// All criterion terms at `b`, with `Sigma_tilde = Sigma_hat`.
    pub fn terms(&self, b: f64) -> Result<CriterionTerms> {
        let p = ShrinkageParams::new(b)?;
        let lf = self.log_f_all(&p, &self.a_mat)?;
        let s = self.log_scale;
        let (hi, lo) = if lf.f0 >= self.log_rho_b {
            (lf.f0, self.log_rho_b)
        } else {
            (self.log_rho_b, lf.f0)
        };
        let bias = if hi == f64::NEG_INFINITY {
            0.0
        } else {
            -(hi - s).exp() * (lo - hi).exp_m1()
        };
        let spread = |big: f64, small: f64| -> f64 {
            if big == f64::NEG_INFINITY {
                return 0.0;
            }
            (-(big - 2.0 * s).exp() * (small - big).exp_m1()).max(0.0)
        };
        let variance_1 = spread(lf.f3, 2.0 * lf.f1) + spread(lf.f2, lf.f3) / self.n;
        let variance_2 = if p.g_prime == 0.0 {
            0.0
        } else {
            (2.0 * lf.f1 - 2.0 * s).exp() * p.g_prime * p.g_prime * self.trace_term(&p)? / (2.0 * self.n)
        };
        Ok(CriterionTerms {
            b,
            log_scale: s,
            bias_sq: bias * bias,
            variance_1,
            variance_2,
        })
    }
}

/// Log values of the four closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogF {
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

/// Criterion terms at one `b`, each divided by `exp(2 log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionTerms {
    pub b: f64,
    pub log_scale: f64,
    pub bias_sq: f64,
    pub variance_1: f64,
    pub variance_2: f64,
}

impl CriterionTerms {
    pub fn variance(&self) -> f64 {
        self.variance_1 + self.variance_2
    }

    /// Scaled criterion value; this is what selection minimizes.
    pub fn total(&self) -> f64 {
        self.bias_sq + self.variance()
    }

    fn unscale(&self, v: f64) -> f64 {
        v * (2.0 * self.log_scale).exp()
    }

    pub fn natural_total(&self) -> f64 {
        self.unscale(self.total())
    }
}

fn log_normal(r: &DVector<f64>, cov: &DMatrix<f64>, name: &'static str) -> Result<f64> {
    let mut c = cov.clone();
    symmetrize(&mut c);
    Ok(GaussianFactor::new(&c, name)?.log_density_residual(r.as_slice()))
}

fn log_det(cov: &DMatrix<f64>, name: &'static str) -> Result<f64> {
    let mut c = cov.clone();
    symmetrize(&mut c);
    Ok(GaussianFactor::new(&c, name)?.log_det())
}

pub fn f0(b: f64, sigma_tilde: &DMatrix<f64>, ctx: &CriterionContext) -> Result<f64> {
    Ok(ctx.log_f(b, sigma_tilde)?.f0.exp())
}

pub fn f1(b: f64, sigma_tilde: &DMatrix<f64>, ctx: &CriterionContext) -> Result<f64> {
    Ok(ctx.log_f(b, sigma_tilde)?.f1.exp())
}

pub fn f2(b: f64, sigma_tilde: &DMatrix<f64>, ctx: &CriterionContext) -> Result<f64> {
    Ok(ctx.log_f(b, sigma_tilde)?.f2.exp())
}

pub fn f3(b: f64, sigma_tilde: &DMatrix<f64>, ctx: &CriterionContext) -> Result<f64> {
    Ok(ctx.log_f(b, sigma_tilde)?.f3.exp())
}

/// `(rho_hat_B - rho_B)^2` in natural scale.
pub fn practical_bias_sq(b: f64, ctx: &CriterionContext) -> Result<f64> {
    let t = ctx.terms(b)?;
    Ok(t.unscale(t.bias_sq))
}

/// `(rho_V1, rho_V2)` in natural scale.
pub fn practical_variance_terms(b: f64, ctx: &CriterionContext) -> Result<(f64, f64)> {
    let t = ctx.terms(b)?;
    Ok((t.unscale(t.variance_1), t.unscale(t.variance_2)))
}

/// `rho_V = rho_V1 + rho_V2` in natural scale.
pub fn practical_variance(b: f64, ctx: &CriterionContext) -> Result<f64> {
    let (v1, v2) = practical_variance_terms(b, ctx)?;
    Ok(v1 + v2)
}

/// Approximate MSE `C(b)` in natural scale.
pub fn criterion(b: f64, ctx: &CriterionContext) -> Result<f64> {
    Ok(ctx.terms(b)?.natural_total())
}
