//! The principal component copula: `Y = W P` with `W` the eigenvectors of
//! the correlation matrix of `Y` and `P` independent groups of uncorrelated
//! generators whose variances are the eigenvalues.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dist::{GroupSpec, Generators};
use crate::error::{PccError, Result};
use crate::linalg::{orient_columns, sym_eigen};
use crate::par::{compensated_sum, map_range};
use crate::special::norm_ppf;
use crate::transform::{build_marginal_table, CosConfig, MarginalTable, DEFAULT_GRID};

/// Eigenvalues are floored here before rescaling to trace `d`, so every
/// generator keeps a positive variance.
pub const LAMBDA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    RankedHistorical,
    Simulated,
}

/// `n x d` observations on the open unit cube, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaSample {
    pub n: usize,
    pub d: usize,
    pub u: Vec<f64>,
    pub source: SampleSource,
}

impl CopulaSample {
    pub fn new(n: usize, d: usize, u: Vec<f64>, source: SampleSource) -> Result<Self> {
        if u.len() != n * d {
            return Err(PccError::Dimension { expected: n * d, got: u.len() });
        }
        if let Some(v) = u.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(PccError::Data(format!("copula observation {v} outside (0, 1)")));
        }
        Ok(CopulaSample { n, d, u, source })
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.u[t * self.d..(t + 1) * self.d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|t| self.u[t * self.d + j]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LogDensity {
    pub rows: Vec<f64>,
    pub total: f64,
    /// Number of entries whose quantile was clipped to the table range.
    pub clipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// `Y = Phi^-1(u)`, for exploring data before a model exists.
    Gaussian,
    /// `Y` from the model's own marginal quantiles.
    Model,
}

/// Serialized model: enough to rebuild the marginal tables bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: String,
    pub d: usize,
    /// Row-major.
    pub rho: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Row-major; columns are eigenvectors.
    pub w: Vec<f64>,
    pub spec: GroupSpec,
    pub cos: CosConfig,
    pub n_grid: usize,
}

#[derive(Debug, Clone)]
pub struct PccModel {
    rho: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: Vec<f64>,
    spec: GroupSpec,
    cos: CosConfig,
    n_grid: usize,
    gens: Generators,
    marginals: Vec<MarginalTable>,
}

fn clean_lambda(values: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = values.iter().map(|v| v.max(LAMBDA_FLOOR)).collect();
    let d = floored.len() as f64;
    let s = compensated_sum(&floored);
    floored.iter().map(|v| v * d / s).collect()
}

impl PccModel {
    /// Model for correlation `rho`. The COS range follows the tails of
    /// `spec` unless `cos` is given.
    pub fn new(rho: &DMatrix<f64>, spec: GroupSpec, cos: Option<CosConfig>) -> Result<Self> {
        let d = rho.nrows();
        if !rho.is_square() {
            return Err(PccError::Dimension { expected: d, got: rho.ncols() });
        }
        if (0..d).any(|i| (rho[(i, i)] - 1.0).abs() > 1e-8) {
            return Err(PccError::Domain("correlation matrix must have unit diagonal".into()));
        }
        let e = sym_eigen(rho)?;
        let mut rho = 0.5 * (rho + rho.transpose());
        rho.fill_diagonal(1.0);
        Self::assemble(rho, e.vectors, clean_lambda(&e.values), spec, cos, DEFAULT_GRID)
    }

    /// Model from an orthogonal `w` and eigenvalues directly. Used when the
    /// eigenvectors are held fixed during estimation.
    pub fn from_eigen(w: DMatrix<f64>, lambda: &[f64], spec: GroupSpec, cos: Option<CosConfig>) -> Result<Self> {
        let d = w.nrows();
        if !w.is_square() || lambda.len() != d {
            return Err(PccError::Dimension { expected: d, got: lambda.len() });
        }
        let mut w = w;
        orient_columns(&mut w);
        let lambda = clean_lambda(lambda);
        let l = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&lambda));
        let mut rho = &w * l * w.transpose();
        rho = 0.5 * (&rho + rho.transpose());
        rho.fill_diagonal(1.0);
        Self::assemble(rho, w, lambda, spec, cos, DEFAULT_GRID)
    }

    fn assemble(
        rho: DMatrix<f64>,
        w: DMatrix<f64>,
        lambda: Vec<f64>,
        spec: GroupSpec,
        cos: Option<CosConfig>,
        n_grid: usize,
    ) -> Result<Self> {
        let d = rho.nrows();
        spec.validate(d)?;
        let cos = cos.unwrap_or_else(|| CosConfig::for_tails(spec.min_nu()));
        cos.validate()?;
        let gens = spec.resolve(&lambda)?;
        let marginals = {
            let g = &gens;
            let w = &w;
            map_range(d, |i| {
                let row: Vec<f64> = w.row(i).iter().copied().collect();
                build_marginal_table(g.projected_cf(&row), &cos, n_grid, i)
            })
        };
        Ok(PccModel { rho, w, lambda, spec, cos, n_grid, gens, marginals })
    }

    /// Same eigenstructure, different generator laws.
    pub fn with_spec(&self, spec: GroupSpec) -> Result<Self> {
        let cos = if spec.min_nu() == self.spec.min_nu() { Some(self.cos) } else { None };
        Self::assemble(self.rho.clone(), self.w.clone(), self.lambda.clone(), spec, cos, self.n_grid)
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }
    pub fn rho(&self) -> &DMatrix<f64> {
        &self.rho
    }
    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }
    pub fn cos(&self) -> &CosConfig {
        &self.cos
    }
    pub fn generators(&self) -> &Generators {
        &self.gens
    }
    pub fn marginal(&self, i: usize) -> &MarginalTable {
        &self.marginals[i]
    }

    fn w_row(&self, i: usize) -> Vec<f64> {
        self.w.row(i).iter().copied().collect()
    }

    /// `P = W' y`.
    pub fn to_generators(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|j| (0..d).map(|i| self.w[(i, j)] * y[i]).sum()).collect()
    }

    /// Joint characteristic function of `Y` at `t`.
    pub fn cf(&self, t: &[f64]) -> Complex64 {
        self.gens.cf(&self.to_generators(t))
    }

    /// Characteristic function of the `i`-th margin.
    pub fn marginal_cf(&self, i: usize) -> impl Fn(f64) -> Complex64 + '_ {
        self.gens.projected_cf(&self.w_row(i))
    }

    /// `ln f_Y(y)`; the Jacobian of an orthogonal map is one.
    pub fn ln_joint_density(&self, y: &[f64]) -> f64 {
        self.gens.ln_pdf(&self.to_generators(y))
    }

    pub fn joint_density(&self, y: &[f64]) -> f64 {
        self.ln_joint_density(y).exp()
    }

    /// Per-row copula log-density `ln f_Y(y) - sum_i ln f_i(y_i)` with
    /// `y_i = F_i^-1(u_i)`.
    pub fn copula_log_density(&self, u: &CopulaSample) -> Result<LogDensity> {
        let d = self.dim();
        if u.d != d {
            return Err(PccError::Dimension { expected: d, got: u.d });
        }
        let per_row = map_range(u.n, |t| {
            let mut clipped = 0;
            let mut marg = Vec::with_capacity(d);
            let y: Vec<f64> = u
                .row(t)
                .iter()
                .zip(&self.marginals)
                .map(|(&ui, m)| {
                    let (y, c) = m.inverse_cdf(ui);
                    clipped += usize::from(c);
                    marg.push(m.ln_pdf(y));
                    y
                })
                .collect();
            (y, compensated_sum(&marg), clipped)
        });
        let y: Vec<f64> = per_row.iter().flat_map(|r| r.0.iter().copied()).collect();
        let p = self.generators_of(&y, u.n);
        let rows: Vec<f64> = map_range(u.n, |t| self.gens.ln_pdf(&p[t * d..(t + 1) * d]) - per_row[t].1);
        let clipped = per_row.iter().map(|r| r.2).sum();
        let total = compensated_sum(&rows);
        Ok(LogDensity { rows, total, clipped })
    }

    /// Row-major `P` for row-major `Y` with `n` rows.
    fn generators_of(&self, y: &[f64], n: usize) -> Vec<f64> {
        let d = self.dim();
        let yt = DMatrix::from_column_slice(d, n, y);
        self.w.tr_mul(&yt).as_slice().to_vec()
    }

    /// Row-major `Y` for row-major `P` with `n` rows.
    fn observables_of(&self, p: &[f64], n: usize) -> Vec<f64> {
        let d = self.dim();
        let pt = DMatrix::from_column_slice(d, n, p);
        (&self.w * pt).as_slice().to_vec()
    }

    /// Draw `n` copula observations. Deterministic in `seed` regardless of
    /// thread count.
    pub fn simulate(&self, n: usize, seed: u64) -> CopulaSample {
        let d = self.dim();
        let y = self.simulate_y(n, seed);
        let u = map_range(n, |t| {
            (0..d).map(|i| self.marginals[i].cdf(y[t * d + i])).collect::<Vec<f64>>()
        });
        CopulaSample { n, d, u: u.concat(), source: SampleSource::Simulated }
    }

    /// Draw `n` rows of `Y` (not transformed to uniforms).
    pub fn simulate_y(&self, n: usize, seed: u64) -> Vec<f64> {
        let p = self.gens.sampler().sample(n, seed);
        self.observables_of(&p, n)
    }

    /// Normal scores `Y` and generators `P = W'Y`, both row-major.
    pub fn implied_normal_scores(&self, u: &CopulaSample, mode: ScoreMode) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        if u.d != d {
            return Err(PccError::Dimension { expected: d, got: u.d });
        }
        let y: Vec<f64> = u
            .u
            .iter()
            .enumerate()
            .map(|(k, &v)| match mode {
                ScoreMode::Gaussian => norm_ppf(v),
                ScoreMode::Model => self.marginals[k % d].quantile(v),
            })
            .collect();
        let p = self.generators_of(&y, u.n);
        Ok((y, p))
    }

    pub fn to_document(&self) -> ModelDocument {
        let d = self.dim();
        ModelDocument {
            version: env!("CARGO_PKG_VERSION").to_string(),
            d,
            rho: (0..d * d).map(|k| self.rho[(k / d, k % d)]).collect(),
            lambda: self.lambda.clone(),
            w: (0..d * d).map(|k| self.w[(k / d, k % d)]).collect(),
            spec: self.spec.clone(),
            cos: self.cos,
            n_grid: self.n_grid,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let d = doc.d;
        if doc.rho.len() != d * d || doc.w.len() != d * d || doc.lambda.len() != d {
            return Err(PccError::Data("model document sizes do not match its dimension".into()));
        }
        let rho = DMatrix::from_row_slice(d, d, &doc.rho);
        let w = DMatrix::from_row_slice(d, d, &doc.w);
        Self::assemble(rho, w, doc.lambda.clone(), doc.spec.clone(), Some(doc.cos), doc.n_grid.max(16))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.to_document()).map_err(|e| PccError::Data(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(s).map_err(|e| PccError::Data(format!("model JSON: {e}")))?;
        Self::from_document(&doc)
    }
}

/// Closed-form Gaussian copula log-density of one row.
pub fn gaussian_copula_ln_density(rho: &DMatrix<f64>, u: &[f64]) -> Result<f64> {
    let chol = rho.clone().cholesky().ok_or_else(|| PccError::Numeric("correlation not positive definite".into()))?;
    let z = nalgebra::DVector::from_iterator(u.len(), u.iter().map(|&v| norm_ppf(v)));
    let sol = chol.solve(&z);
    let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * ln_det - 0.5 * (z.dot(&sol) - z.dot(&z)))
}
