//! AR(1)-GARCH(1,1) quasi-maximum-likelihood filtering of return series:
//!
//! `r_t = delta + phi r_{t-1} + eps_t`, `eps_t = sigma_t z_t`,
//! `sigma_t^2 = omega + alpha eps_{t-1}^2 + beta sigma_{t-1}^2`.
//!
//! The recursion starts at the unconditional variance `omega/(1-alpha-beta)`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;

use crate::dist::block_rng;
use crate::error::{PccError, Result};
use crate::optim::{bfgs, numerical_hessian};
use crate::par::{compensated_sum, map_range};

pub const MIN_LENGTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub delta: f64,
    pub phi: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta < 1.0;
        if !ok || [self.delta, self.phi].iter().any(|v| !v.is_finite()) {
            return Err(PccError::Domain(format!("invalid GARCH parameters {self:?}")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 5] {
        [self.delta, self.phi, self.omega, self.alpha, self.beta]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    /// Standard errors of `(delta, phi, omega, alpha, beta)` from the
    /// inverse Hessian of the quasi-likelihood; `NaN` when it is singular.
    pub se: [f64; 5],
    pub loglik: f64,
    pub n: usize,
    pub converged: bool,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

// theta = (delta, atanh phi, ln omega, logit(alpha+beta), logit(alpha/(alpha+beta)))
fn from_theta(t: &[f64]) -> GarchParams {
    let s = logistic(t[3]);
    let a = logistic(t[4]);
    GarchParams { delta: t[0], phi: t[1].tanh(), omega: t[2].exp(), alpha: s * a, beta: s * (1.0 - a) }
}

fn to_theta(p: &GarchParams) -> Vec<f64> {
    let s = (p.alpha + p.beta).clamp(1e-6, 1.0 - 1e-6);
    let a = (p.alpha / s).clamp(1e-6, 1.0 - 1e-6);
    vec![p.delta, p.phi.clamp(-0.999_999, 0.999_999).atanh(), p.omega.ln(), logit(s), logit(a)]
}

/// Residuals `eps_t` and variances `sigma_t^2` for `t = 1..n`.
fn recursion(r: &[f64], p: &GarchParams) -> (Vec<f64>, Vec<f64>) {
    let n = r.len() - 1;
    let mut eps = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    let mut s2 = p.omega / (1.0 - p.alpha - p.beta);
    for t in 1..r.len() {
        let e = r[t] - p.delta - p.phi * r[t - 1];
        if t > 1 {
            let prev = eps[t - 2];
            s2 = p.omega + p.alpha * prev * prev + p.beta * s2;
        }
        eps.push(e);
        var.push(s2);
    }
    (eps, var)
}

/// Gaussian quasi-log-likelihood of `r` under `p`.
pub fn quasi_loglik(r: &[f64], p: &GarchParams) -> f64 {
    let (eps, var) = recursion(r, p);
    let terms: Vec<f64> = eps
        .iter()
        .zip(&var)
        .map(|(e, v)| -0.5 * ((2.0 * PI).ln() + v.ln() + e * e / v))
        .collect();
    compensated_sum(&terms)
}

fn check_series(r: &[f64]) -> Result<()> {
    if r.len() < MIN_LENGTH {
        return Err(PccError::Data(format!("GARCH filtering needs at least {MIN_LENGTH} returns, got {}", r.len())));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(PccError::Data("non-finite value in return series".into()));
    }
    Ok(())
}

pub fn fit_ar_garch(r: &[f64]) -> Result<GarchFit> {
    check_series(r)?;
    let n = r.len() - 1;
    // least-squares AR(1) start
    let x = &r[..n];
    let y = &r[1..];
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let phi0 = if sxx > 0.0 { (sxy / sxx).clamp(-0.9, 0.9) } else { 0.0 };
    let delta0 = my - phi0 * mx;
    let resid_var = y.iter().zip(x).map(|(b, a)| (b - delta0 - phi0 * a).powi(2)).sum::<f64>() / n as f64;
    if !(resid_var > 0.0) {
        return Err(PccError::Data("return series has zero variance".into()));
    }
    let start = GarchParams { delta: delta0, phi: phi0, omega: 0.1 * resid_var, alpha: 0.05, beta: 0.85 };
    let scale = 1.0 / n as f64;
    let objective = |t: &[f64]| -> f64 {
        let v = -quasi_loglik(r, &from_theta(t)) * scale;
        if v.is_finite() { v } else { f64::NAN }
    };
    let m = bfgs(objective, &to_theta(&start), 500, 1e-8);
    if !m.f.is_finite() {
        return Err(PccError::NotConverged(format!("GARCH quasi-likelihood is not finite at {:?}", from_theta(&m.x))));
    }
    let params = from_theta(&m.x);
    params.validate()?;
    let se = standard_errors(r, &m.x);
    Ok(GarchFit { params, se, loglik: quasi_loglik(r, &params), n, converged: m.converged })
}

/// Delta-method standard errors: invert the Hessian in the unconstrained
/// coordinates and map through the Jacobian of the parameter transform.
fn standard_errors(r: &[f64], theta: &[f64]) -> [f64; 5] {
    let h = numerical_hessian(|t| -quasi_loglik(r, &from_theta(t)), theta);
    let hm = DMatrix::from_fn(5, 5, |i, j| h[i][j]);
    let Some(cov) = hm.try_inverse() else { return [f64::NAN; 5] };
    let base = from_theta(theta).as_array();
    let mut jac = DMatrix::zeros(5, 5);
    let mut tp = theta.to_vec();
    for j in 0..5 {
        let step = 1e-6 * theta[j].abs().max(1.0);
        tp[j] = theta[j] + step;
        let up = from_theta(&tp).as_array();
        tp[j] = theta[j];
        for i in 0..5 {
            jac[(i, j)] = (up[i] - base[i]) / step;
        }
    }
    let c = &jac * cov * jac.transpose();
    let mut se = [f64::NAN; 5];
    for (i, s) in se.iter_mut().enumerate() {
        if c[(i, i)] >= 0.0 {
            *s = c[(i, i)].sqrt();
        }
    }
    se
}

/// Devolatized residuals `eps_t / sigma_t`, one fewer than the returns.
pub fn filter_residuals(r: &[f64], fit: &GarchParams) -> Result<Vec<f64>> {
    fit.validate()?;
    if r.len() < 2 {
        return Err(PccError::Data("need at least two returns".into()));
    }
    let (eps, var) = recursion(r, fit);
    Ok(eps.iter().zip(&var).map(|(e, v)| e / v.sqrt()).collect())
}

/// Fit and filter every column of a row-major `n x d` return panel.
/// Returns the `(n-1) x d` residual panel and the per-column fits.
pub fn filter_panel(returns: &[f64], n: usize, d: usize) -> Result<(Vec<f64>, Vec<GarchFit>)> {
    if returns.len() != n * d {
        return Err(PccError::Dimension { expected: n * d, got: returns.len() });
    }
    let per = map_range(d, |j| {
        let col: Vec<f64> = (0..n).map(|t| returns[t * d + j]).collect();
        let fit = fit_ar_garch(&col)?;
        let x = filter_residuals(&col, &fit.params)?;
        Ok::<_, PccError>((fit, x))
    });
    let mut fits = Vec::with_capacity(d);
    let mut cols = Vec::with_capacity(d);
    for (j, p) in per.into_iter().enumerate() {
        let (f, x) = p.map_err(|e| PccError::Data(format!("column {j}: {e}")))?;
        fits.push(f);
        cols.push(x);
    }
    let m = n - 1;
    let mut out = vec![0.0; m * d];
    for (j, c) in cols.iter().enumerate() {
        for t in 0..m {
            out[t * d + j] = c[t];
        }
    }
    Ok((out, fits))
}

/// Draw `n` returns from the model, after a burn-in of 500 steps.
pub fn simulate_ar_garch(p: &GarchParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    p.validate()?;
    let mut rng = block_rng(seed, 0);
    let burn = 500;
    let mut r_prev = p.delta / (1.0 - p.phi);
    let mut s2 = p.omega / (1.0 - p.alpha - p.beta);
    let mut e_prev = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        if t > 0 {
            s2 = p.omega + p.alpha * e_prev * e_prev + p.beta * s2;
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = s2.sqrt() * z;
        let r = p.delta + p.phi * r_prev + e;
        if t >= burn {
            out.push(r);
        }
        e_prev = e;
        r_prev = r;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LjungBox {
    pub statistic: f64,
    pub lags: usize,
    pub p_value: f64,
}

/// Ljung-Box portmanteau test for autocorrelation up to `lags`.
pub fn ljung_box(x: &[f64], lags: usize) -> Result<LjungBox> {
    let n = x.len();
    if lags == 0 || n <= lags + 1 {
        return Err(PccError::Data(format!("Ljung-Box needs more than {} observations", lags + 1)));
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    let mut q = 0.0;
    for k in 1..=lags {
        let ck: f64 = (k..n).map(|t| c[t] * c[t - k]).sum();
        let rk = ck / c0;
        q += rk * rk / (n - k) as f64;
    }
    let statistic = n as f64 * (n as f64 + 2.0) * q;
    let chi = ChiSquared::new(lags as f64).map_err(|e| PccError::Numeric(e.to_string()))?;
    Ok(LjungBox { statistic, lags, p_value: chi.sf(statistic) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_simulated_parameters() {
        let truth = GarchParams { delta: 0.02, phi: -0.05, omega: 0.1 * (1.0 - 0.9), alpha: 0.1, beta: 0.8 };
        let r = simulate_ar_garch(&truth, 5000, 42).unwrap();
        let fit = fit_ar_garch(&r).unwrap();
        let est = fit.params.as_array();
        let tru = truth.as_array();
        for i in 0..5 {
            assert!((est[i] - tru[i]).abs() < 3.0 * fit.se[i], "param {i}: {} vs {} (se {})", est[i], tru[i], fit.se[i]);
        }
        let x = filter_residuals(&r, &fit.params).unwrap();
        assert_eq!(x.len(), r.len() - 1);
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!(ljung_box(&sq, 10).unwrap().p_value > 0.01);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 1.0).abs() < 0.1);
    }

    #[test]
    fn white_noise_has_little_persistence() {
        let p = GarchParams { delta: 0.0, phi: 0.0, omega: 2.0, alpha: 0.0, beta: 0.0 };
        let mut rng = block_rng(9, 0);
        let r: Vec<f64> = (0..3000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 2f64.sqrt() * z }).collect();
        let fit = fit_ar_garch(&r).unwrap();
        let uncond = fit.params.omega / (1.0 - fit.params.alpha - fit.params.beta);
        assert!((uncond - 2.0).abs() < 0.2, "{:?}", fit.params);
        assert!(fit.params.alpha < 0.05);
        let x = filter_residuals(&r, &p).unwrap();
        assert!((x[0] - r[1] / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn variance_recursion_positive_and_inputs_checked() {
        let p = GarchParams { delta: 0.0, phi: 0.3, omega: 1e-6, alpha: 0.2, beta: 0.79 };
        let r = simulate_ar_garch(&p, 400, 1).unwrap();
        let (_, var) = recursion(&r, &p);
        assert!(var.iter().all(|v| *v > 0.0));
        assert!(fit_ar_garch(&r[..100]).is_err());
        assert!(GarchParams { alpha: 0.5, beta: 0.6, ..p }.validate().is_err());
    }
}
