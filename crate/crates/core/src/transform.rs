//! Characteristic-function inversion: cosine (COS) expansions for density
//! and distribution function, Gil-Pelaez inversion, plain FFT inversion, and
//! the tabulated marginals used everywhere else.
//!
//! All grid evaluations of a cosine series go through one FFT of length
//! `2M`, so a table with thousands of points costs little more than the
//! `N` characteristic-function evaluations.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{PccError, Result};
use crate::quad::{integrate, QuadOptions};

/// Probability clip applied to every tabulated distribution function.
pub const CDF_EPS: f64 = 1e-10;
pub const DEFAULT_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosConfig {
    pub a: f64,
    pub b: f64,
    pub n_terms: usize,
}

impl Default for CosConfig {
    fn default() -> Self {
        CosConfig { a: -10.0, b: 10.0, n_terms: 100 }
    }
}

impl CosConfig {
    pub fn new(a: f64, b: f64, n_terms: usize) -> Result<Self> {
        let c = CosConfig { a, b, n_terms };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) || !self.a.is_finite() || !self.b.is_finite() || self.n_terms < 16 {
            return Err(PccError::Config(format!(
                "COS range must satisfy a < b with at least 16 terms, got [{}, {}] with {}",
                self.a, self.b, self.n_terms
            )));
        }
        Ok(())
    }

    /// Default truncation, widened to +-15 when some Student block has fewer
    /// than 6 degrees of freedom.
    pub fn for_tails(min_nu: Option<f64>) -> Self {
        match min_nu {
            Some(nu) if nu < 6.0 => CosConfig { a: -15.0, b: 15.0, n_terms: 100 },
            _ => CosConfig::default(),
        }
    }

    fn len(&self) -> f64 {
        self.b - self.a
    }
}

/// `c_k = 2/(b-a) Re[phi(k pi/(b-a)) exp(-i k a pi/(b-a))]`.
pub fn cos_coefficients<F: Fn(f64) -> Complex64>(cf: &F, cfg: &CosConfig) -> Vec<f64> {
    let l = cfg.len();
    (0..cfg.n_terms)
        .map(|k| {
            let u = k as f64 * PI / l;
            let shift = Complex64::new(0.0, -u * cfg.a).exp();
            2.0 / l * (cf(u) * shift).re
        })
        .collect()
}

fn check_range(cfg: &CosConfig, y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| !(**v >= cfg.a && **v <= cfg.b)) {
        return Err(PccError::Domain(format!("{v} outside the expansion range [{}, {}]", cfg.a, cfg.b)));
    }
    Ok(())
}

pub fn cos_pdf<F: Fn(f64) -> Complex64>(cf: F, cfg: &CosConfig, y: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_range(cfg, y)?;
    let c = cos_coefficients(&cf, cfg);
    let l = cfg.len();
    Ok(y.iter()
        .map(|&x| {
            let w = PI * (x - cfg.a) / l;
            0.5 * c[0] + c.iter().enumerate().skip(1).map(|(k, ck)| ck * (k as f64 * w).cos()).sum::<f64>()
        })
        .collect())
}

pub fn cos_cdf<F: Fn(f64) -> Complex64>(cf: F, cfg: &CosConfig, y: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_range(cfg, y)?;
    let c = cos_coefficients(&cf, cfg);
    let l = cfg.len();
    Ok(y.iter()
        .map(|&x| {
            let w = PI * (x - cfg.a) / l;
            let s: f64 = c
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, ck)| ck * l / (k as f64 * PI) * (k as f64 * w).sin())
                .sum();
            (0.5 * c[0] * (x - cfg.a) + s).clamp(0.0, 1.0)
        })
        .collect())
}

/// `F(y) = 1/2 - (1/pi) int_0^inf Im[exp(-i t y) phi(t)] / t dt`.
pub fn gil_pelaez_cdf<F: Fn(f64) -> Complex64>(cf: F, y: f64) -> Result<f64> {
    let integrand = |t: f64| (Complex64::new(0.0, -t * y).exp() * cf(t)).im / t;
    let opt = QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 5000 };
    let r = integrate(integrand, 0.0, f64::INFINITY, opt);
    if !r.converged {
        return Err(PccError::Numeric(format!(
            "Gil-Pelaez quadrature at y={y} did not converge: estimate {} with error {:.2e} after {} evaluations",
            r.value, r.error, r.evals
        )));
    }
    Ok(0.5 - r.value / PI)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// Density on the uniform grid `a + j (b-a)/n`, `j = 0..n`, by direct
/// discrete Fourier inversion of the characteristic function. Negative
/// ripples are floored at zero.
pub fn fft_pdf<F: Fn(f64) -> Complex64>(cf: F, n_points: usize, range: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = range;
    if n_points < 256 || !n_points.is_power_of_two() || !(a < b) {
        return Err(PccError::Config(format!("fft_pdf needs a power-of-two size >= 256 and a < b, got {n_points}")));
    }
    let n = n_points;
    let dx = (b - a) / n as f64;
    let dt = 2.0 * PI / (n as f64 * dx);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let t = (k as f64 - (n / 2) as f64) * dt;
            cf(t) * Complex64::new(0.0, -t * a).exp()
        })
        .collect();
    fft_plan(n).process(&mut buf);
    let grid: Vec<f64> = (0..n).map(|j| a + j as f64 * dx).collect();
    let dens = buf
        .iter()
        .enumerate()
        .map(|(j, z)| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            (sign * z.re * dt / (2.0 * PI)).max(0.0)
        })
        .collect();
    Ok((grid, dens))
}

/// Cosine-series density, derivative and distribution function on the
/// `m + 1` points `a + j (b-a)/m`.
fn cos_grid(c: &[f64], cfg: &CosConfig, m: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let l = cfg.len();
    let len = 2 * m;
    let mut packed = vec![Complex64::new(0.0, 0.0); len];
    let mut deriv = vec![Complex64::new(0.0, 0.0); len];
    for (k, ck) in c.iter().enumerate().take(len) {
        let kf = k as f64;
        let re = if k == 0 { 0.5 * ck } else { *ck };
        let im = if k == 0 { 0.0 } else { ck * l / (kf * PI) };
        packed[k] = Complex64::new(re, im);
        deriv[k] = Complex64::new(ck * kf * PI / l, 0.0);
    }
    let plan = fft_plan(len);
    plan.process(&mut packed);
    plan.process(&mut deriv);
    let mut pdf = Vec::with_capacity(m + 1);
    let mut dpdf = Vec::with_capacity(m + 1);
    let mut cdf = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let z = packed[j];
        let zm = packed[(len - j) % len];
        let cos_sum = 0.5 * (z.re + zm.re);
        let sin_sum = 0.5 * (z.re - zm.re);
        let y = cfg.a + l * j as f64 / m as f64;
        pdf.push(cos_sum);
        cdf.push(0.5 * c[0] * (y - cfg.a) + sin_sum);
        dpdf.push(deriv[j].im);
    }
    (pdf, dpdf, cdf)
}

#[inline]
fn hermite(t: f64, h: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * h * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * m1
}

/// Tabulated marginal of one coordinate: density, its derivative and the
/// monotone-repaired distribution function on a uniform grid, plus a
/// monotone cubic inverse.
#[derive(Debug, Clone)]
pub struct MarginalTable {
    pub index: usize,
    a: f64,
    h: f64,
    pdf: Vec<f64>,
    dpdf: Vec<f64>,
    cdf: Vec<f64>,
    // strictly increasing knots of the inverse
    inv_u: Vec<f64>,
    inv_y: Vec<f64>,
    inv_slope: Vec<f64>,
}

/// Build the table for `index` from its characteristic function with `n_grid`
/// intervals across the COS range.
pub fn build_marginal_table<F: Fn(f64) -> Complex64>(cf: F, cfg: &CosConfig, n_grid: usize, index: usize) -> MarginalTable {
    let c = cos_coefficients(&cf, cfg);
    MarginalTable::from_coefficients(&c, cfg, n_grid, index)
}

impl MarginalTable {
    pub fn from_coefficients(c: &[f64], cfg: &CosConfig, n_grid: usize, index: usize) -> Self {
        let m = n_grid.max(16);
        let (mut pdf, mut dpdf, raw_cdf) = cos_grid(c, cfg, m);
        for (p, dp) in pdf.iter_mut().zip(dpdf.iter_mut()) {
            if *p <= 0.0 {
                *p = 0.0;
                *dp = 0.0;
            }
        }
        let mut cdf = Vec::with_capacity(raw_cdf.len());
        let mut run = f64::NEG_INFINITY;
        for v in &raw_cdf {
            run = run.max(*v);
            cdf.push(run);
        }
        let total = *cdf.last().expect("nonempty grid");
        for v in cdf.iter_mut() {
            *v = (*v / total).clamp(CDF_EPS, 1.0 - CDF_EPS);
        }
        for (p, dp) in pdf.iter_mut().zip(dpdf.iter_mut()) {
            *p /= total;
            *dp /= total;
        }
        let h = (cfg.b - cfg.a) / m as f64;

        // knots for the inverse: drop plateaus, keeping the last point of the
        // lower clip region and the first point of every later level
        let start = cdf.iter().position(|&v| v > cdf[0]).map_or(0, |i| i.saturating_sub(1));
        let mut keep = vec![start];
        for i in start + 1..cdf.len() {
            if cdf[i] > cdf[*keep.last().expect("nonempty")] {
                keep.push(i);
            }
        }
        let inv_u: Vec<f64> = keep.iter().map(|&i| cdf[i]).collect();
        let inv_y: Vec<f64> = keep.iter().map(|&i| cfg.a + h * i as f64).collect();
        let mut inv_slope: Vec<f64> = Vec::with_capacity(keep.len());
        for (k, &i) in keep.iter().enumerate() {
            let secant = |a: usize, b: usize| (inv_y[b] - inv_y[a]) / (inv_u[b] - inv_u[a]);
            let fallback = if keep.len() < 2 {
                0.0
            } else if k + 1 < keep.len() {
                secant(k, k + 1)
            } else {
                secant(k - 1, k)
            };
            inv_slope.push(if pdf[i] > 0.0 { 1.0 / pdf[i] } else { fallback });
        }
        // Fritsch-Carlson limiter keeps the interpolant monotone
        for k in 0..keep.len().saturating_sub(1) {
            let delta = (inv_y[k + 1] - inv_y[k]) / (inv_u[k + 1] - inv_u[k]);
            let al = inv_slope[k] / delta;
            let be = inv_slope[k + 1] / delta;
            let r = al * al + be * be;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                inv_slope[k] = tau * al * delta;
                inv_slope[k + 1] = tau * be * delta;
            }
        }
        MarginalTable { index, a: cfg.a, h, pdf, dpdf, cdf, inv_u, inv_y, inv_slope }
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.pdf.len()).map(|i| self.a + self.h * i as f64).collect()
    }

    pub fn pdf_values(&self) -> &[f64] {
        &self.pdf
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    pub fn lower(&self) -> f64 {
        self.a
    }

    pub fn upper(&self) -> f64 {
        self.a + self.h * (self.pdf.len() - 1) as f64
    }

    fn locate(&self, y: f64) -> Option<(usize, f64)> {
        let s = (y - self.a) / self.h;
        if !(s >= 0.0) || s > (self.pdf.len() - 1) as f64 {
            return None;
        }
        let i = (s.floor() as usize).min(self.pdf.len() - 2);
        Some((i, s - i as f64))
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match self.locate(y) {
            Some((i, t)) => hermite(t, self.h, self.pdf[i], self.pdf[i + 1], self.dpdf[i], self.dpdf[i + 1]).max(0.0),
            None => 0.0,
        }
    }

    /// Log density, floored at `ln(1e-300)` so tail rows stay finite.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        self.pdf(y).max(1e-300).ln()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self.locate(y) {
            Some((i, t)) => hermite(t, self.h, self.cdf[i], self.cdf[i + 1], self.pdf[i], self.pdf[i + 1])
                .clamp(self.cdf[i], self.cdf[i + 1]),
            None if y < self.a => CDF_EPS,
            None => 1.0 - CDF_EPS,
        }
    }

    /// Quantile for `u`, and whether `u` fell outside the tabulated range
    /// and was clipped.
    pub fn inverse_cdf(&self, u: f64) -> (f64, bool) {
        let n = self.inv_u.len();
        if n < 2 {
            return (self.inv_y[0], true);
        }
        if u <= self.inv_u[0] {
            return (self.inv_y[0], u < self.inv_u[0]);
        }
        if u >= self.inv_u[n - 1] {
            return (self.inv_y[n - 1], u > self.inv_u[n - 1]);
        }
        let k = self.inv_u.partition_point(|&v| v <= u) - 1;
        let du = self.inv_u[k + 1] - self.inv_u[k];
        let t = (u - self.inv_u[k]) / du;
        let y = hermite(t, du, self.inv_y[k], self.inv_y[k + 1], self.inv_slope[k], self.inv_slope[k + 1]);
        (y, false)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        self.inverse_cdf(u).0
    }
}
