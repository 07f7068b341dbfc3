//! Estimation from pseudo-observations: rank transform, normal-scores
//! start, shape likelihood with fixed eigenstructure, joint likelihood over
//! parsimonious correlation structures, the iterative moment/likelihood
//! hybrid, bootstrap standard deviations and information criteria.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::{block_rng, GroupSpec};
use crate::error::{PccError, Result};
use crate::family::{CopulaFamily, TailLink};
use crate::linalg::{psd_project, sample_correlation, second_moment, sym_eigen, to_correlation, Eigen};
use crate::optim::{central_gradient, nelder_mead, numerical_hessian, SimplexOptions};
use crate::par::map_range;
use crate::pcc::{CopulaSample, ModelDocument, PccModel, SampleSource, ScoreMode};
use crate::special::norm_ppf;
use crate::transform::CosConfig;
use rand::Rng;

/// Eigenvalue floor used when projecting moment estimates.
pub const PSD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Mle,
    GmmHybrid,
}

/// Correlation parametrization used by the joint likelihood fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    /// Normal-scores correlation held fixed.
    Fixed,
    Equicorrelation,
    TwoFactor,
    Free,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub method: FitMethod,
    /// Only used by the likelihood method.
    pub structure: StructureKind,
    pub max_iterations: usize,
    /// Frobenius norm of the change in the correlation matrix.
    pub corr_tol: f64,
    /// Largest change of a shape parameter, relative to `max(1, |value|)`.
    pub shape_tol: f64,
    pub max_evals: u64,
    pub simplex_tol: f64,
    pub restarts: usize,
    /// Newton steps after the simplex, using finite-difference derivatives.
    pub polish_steps: usize,
    pub n_boot: usize,
    pub link: TailLink,
    pub cos: Option<CosConfig>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            method: FitMethod::GmmHybrid,
            structure: StructureKind::Fixed,
            max_iterations: 10,
            corr_tol: 1e-4,
            shape_tol: 5e-3,
            max_evals: 400,
            simplex_tol: 1e-5,
            restarts: 1,
            polish_steps: 3,
            n_boot: 100,
            link: TailLink::Equal,
            cos: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 || !(self.corr_tol > 0.0) || !(self.shape_tol > 0.0) || !(self.simplex_tol > 0.0) {
            return Err(PccError::Config("fit needs at least one iteration and positive tolerances".into()));
        }
        Ok(())
    }

    fn simplex(&self) -> SimplexOptions {
        SimplexOptions { max_iters: self.max_evals, f_tol: self.simplex_tol, restarts: self.restarts }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `None` for the starting point.
    pub corr_delta: Option<f64>,
    pub shape_delta: Option<f64>,
    pub shape: Vec<f64>,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub family: CopulaFamily,
    pub link: TailLink,
    pub theta: Vec<f64>,
    pub model: PccModel,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    /// The correlation update stopped contracting.
    pub oscillating: bool,
    pub clipped: usize,
    pub trace: Vec<IterationRecord>,
    pub bootstrap_sd: Option<Vec<f64>>,
}

/// JSON-friendly summary of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub family: CopulaFamily,
    pub label: String,
    pub link: TailLink,
    pub parameters: Vec<(String, f64)>,
    pub bootstrap_sd: Option<Vec<f64>>,
    pub lambda_head: Vec<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub oscillating: bool,
    pub clipped: usize,
    pub trace: Vec<IterationRecord>,
    pub model: ModelDocument,
}

impl FitResult {
    pub fn report(&self) -> FitReport {
        FitReport {
            family: self.family,
            label: self.family.label().to_string(),
            link: self.link,
            parameters: self
                .family
                .param_names()
                .iter()
                .zip(&self.theta)
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            bootstrap_sd: self.bootstrap_sd.clone(),
            lambda_head: self.model.lambda().iter().take(5).copied().collect(),
            loglik: self.loglik,
            aic: self.aic,
            bic: self.bic,
            n: self.n,
            iterations: self.iterations,
            converged: self.converged,
            oscillating: self.oscillating,
            clipped: self.clipped,
            trace: self.trace.clone(),
            model: self.model.to_document(),
        }
    }
}

/// `(AIC, BIC)` counting shape parameters only.
pub fn aic_bic(loglik: f64, k: usize, n: usize) -> (f64, f64) {
    (2.0 * k as f64 - 2.0 * loglik, k as f64 * (n as f64).ln() - 2.0 * loglik)
}

/// Average ranks (1-based) of `x`, ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for k in i..=j {
            ranks[idx[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `u = rank / (n + 1)` column by column of a row-major `n x d` matrix.
pub fn ranks_to_pseudo_obs(x: &[f64], n: usize, d: usize) -> Result<CopulaSample> {
    if x.len() != n * d {
        return Err(PccError::Dimension { expected: n * d, got: x.len() });
    }
    if n < 2 {
        return Err(PccError::Data("need at least two observations".into()));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(PccError::Data("NaN in input data".into()));
    }
    let mut u = vec![0.0; n * d];
    for j in 0..d {
        let col: Vec<f64> = (0..n).map(|t| x[t * d + j]).collect();
        if col.iter().all(|v| *v == col[0]) {
            return Err(PccError::Data(format!("column {j} is constant")));
        }
        for (t, r) in average_ranks(&col).into_iter().enumerate() {
            u[t * d + j] = r / (n + 1) as f64;
        }
    }
    CopulaSample::new(n, d, u, SampleSource::RankedHistorical)
}

/// Correlation of the normal scores `Phi^-1(u)` and its eigendecomposition.
pub fn init_normal_scores(u: &CopulaSample) -> Result<(DMatrix<f64>, Eigen)> {
    let z: Vec<f64> = u.u.iter().map(|&v| norm_ppf(v)).collect();
    let rho = psd_project(&sample_correlation(&z, u.n, u.d)?, PSD_FLOOR)?;
    let e = sym_eigen(&rho)?;
    Ok((rho, e))
}

/// Maximize the copula likelihood over the shape parameters of `family`
/// with the eigenstructure of `base` held fixed. Returns the fitted model,
/// parameters, log-likelihood and whether the optimizer converged.
pub fn fit_shape_mle(
    u: &CopulaSample,
    base: &PccModel,
    family: CopulaFamily,
    theta0: &[f64],
    cfg: &FitConfig,
) -> Result<(PccModel, Vec<f64>, f64, bool)> {
    shape_mle(u, base, family, theta0, Some(1.0), cfg.polish_steps, cfg)
}

fn shape_mle(
    u: &CopulaSample,
    base: &PccModel,
    family: CopulaFamily,
    theta0: &[f64],
    // simplex edge scale, or `None` to only polish the start
    step_scale: Option<f64>,
    polish_steps: usize,
    cfg: &FitConfig,
) -> Result<(PccModel, Vec<f64>, f64, bool)> {
    let d = base.dim();
    let build = |theta: &[f64]| -> Result<PccModel> {
        let spec = family.spec(d, theta, cfg.link)?;
        match cfg.cos {
            Some(c) => PccModel::from_eigen(base.w().clone(), base.lambda(), spec, Some(c)),
            None => base.with_spec(spec),
        }
    };
    if family.n_shape() == 0 {
        let m = build(&[])?;
        let ll = m.copula_log_density(u)?.total;
        return Ok((m, vec![], ll, true));
    }
    let negll = |theta: &[f64]| -> f64 {
        match build(theta).and_then(|m| m.copula_log_density(u)) {
            Ok(ld) => -ld.total,
            Err(_) => f64::NAN,
        }
    };
    let start = if negll(theta0).is_finite() { theta0.to_vec() } else { family.initial() };
    let (mut theta, mut best, converged) = match step_scale {
        Some(scale) => {
            let steps: Vec<f64> = family.steps().iter().map(|s| s * scale).collect();
            let res = nelder_mead(&negll, &start, &steps, cfg.simplex());
            (res.x, res.f, res.converged)
        }
        None => {
            let f = negll(&start);
            (start, f, true)
        }
    };
    for _ in 0..polish_steps {
        let g = central_gradient(&negll, &theta);
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let h = numerical_hessian(&negll, &theta);
        let k = theta.len();
        let hm = DMatrix::from_fn(k, k, |i, j| h[i][j]);
        let Some(chol) = hm.cholesky() else { break };
        let step = chol.solve(&nalgebra::DVector::from_column_slice(&g));
        let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - s).collect();
        let f = negll(&cand);
        if f.is_finite() && f <= best {
            theta = cand;
            best = f;
        } else {
            break;
        }
    }
    let m = build(&theta)?;
    Ok((m, theta, -best, converged))
}

fn shape_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

/// Moment matrix `(1/n) sum_t y_t y_t'` with `y = F^-1(u)` from `model`,
/// rescaled to unit diagonal and projected to a valid correlation matrix.
pub fn moment_correlation(u: &CopulaSample, model: &PccModel) -> Result<DMatrix<f64>> {
    let (y, _) = model.implied_normal_scores(u, ScoreMode::Model)?;
    let m = second_moment(&y, u.n, u.d);
    psd_project(&to_correlation(&m)?, PSD_FLOOR)
}

/// Alternate a moment update of the correlation matrix, its eigen
/// decomposition and a likelihood update of the shape parameters until both
/// settle.
pub fn fit_gmm_hybrid(u: &CopulaSample, family: CopulaFamily, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let d = u.d;
    let (rho0, _) = init_normal_scores(u)?;
    let gauss = GroupSpec::gaussian(d);
    let base = PccModel::new(&rho0, gauss, cfg.cos)?;
    let (mut model, mut theta, mut ll, mut conv) = shape_mle(u, &base, family, &family.initial(), Some(1.0), 0, cfg)?;
    let mut rho = rho0;
    let mut trace = vec![IterationRecord { iteration: 0, corr_delta: None, shape_delta: None, shape: theta.clone(), loglik: ll }];
    let mut converged = false;
    let mut oscillating = false;
    let mut growth = 0;
    let mut iterations = 0;
    for k in 1..=cfg.max_iterations {
        iterations = k;
        let new_rho = moment_correlation(u, &model)?;
        let corr_delta = (&new_rho - &rho).norm();
        let spec = model.spec().clone();
        let base = PccModel::new(&new_rho, spec, cfg.cos)?;
        // warm start: the shapes move little once the correlation settles
        let scale = if k == 1 { 0.5 } else { 0.1 };
        let warm = FitConfig { restarts: if k == 1 { cfg.restarts } else { 0 }, ..cfg.clone() };
        let (m, t, l, c) = shape_mle(u, &base, family, &theta, Some(scale), 0, &warm)?;
        let sd = shape_delta(&theta, &t);
        let prev_delta = trace.last().and_then(|r| r.corr_delta).unwrap_or(f64::NAN);
        trace.push(IterationRecord { iteration: k, corr_delta: Some(corr_delta), shape_delta: Some(sd), shape: t.clone(), loglik: l });
        rho = new_rho;
        model = m;
        theta = t;
        ll = l;
        conv = c;
        if corr_delta < cfg.corr_tol && sd < cfg.shape_tol {
            converged = true;
            break;
        }
        if prev_delta.is_finite() && corr_delta >= prev_delta && corr_delta >= cfg.corr_tol {
            growth += 1;
            if growth >= 2 {
                oscillating = true;
                break;
            }
        } else {
            growth = 0;
        }
    }
    if cfg.polish_steps > 0 && family.n_shape() > 0 {
        // final Newton polish of the shapes at the last correlation estimate
        let (m, t, l, _) = shape_mle(u, &model, family, &theta, None, cfg.polish_steps, cfg)?;
        model = m;
        theta = t;
        ll = l;
    }
    let ld = model.copula_log_density(u)?;
    let (aic, bic) = aic_bic(ll, family.n_shape(), u.n);
    Ok(FitResult {
        family,
        link: cfg.link,
        theta,
        model,
        loglik: ll,
        aic,
        bic,
        n: u.n,
        iterations,
        converged: converged && conv,
        oscillating,
        clipped: ld.clipped,
        trace,
        bootstrap_sd: None,
    })
}

/// Parsimonious correlation parameterizations for joint likelihood fits.
#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationStructure {
    /// Held at the given matrix; only shapes are fitted.
    Fixed(DMatrix<f64>),
    /// One common off-diagonal value.
    Equicorrelation,
    /// `rho_ij = xi_i xi_j + gamma_i gamma_j` off the diagonal.
    TwoFactor,
    /// `rho = L L'` with `L` lower triangular with unit-length rows.
    FreeLowerTriangle,
}

impl CorrelationStructure {
    fn n_params(&self, d: usize) -> usize {
        match self {
            CorrelationStructure::Fixed(_) => 0,
            CorrelationStructure::Equicorrelation => 1,
            CorrelationStructure::TwoFactor => 2 * d,
            CorrelationStructure::FreeLowerTriangle => d * (d - 1) / 2,
        }
    }

    /// Correlation matrix for parameters `x`, or `None` outside the domain.
    pub fn matrix(&self, d: usize, x: &[f64]) -> Option<DMatrix<f64>> {
        match self {
            CorrelationStructure::Fixed(m) => Some(m.clone()),
            CorrelationStructure::Equicorrelation => {
                let lo = -1.0 / (d as f64 - 1.0).max(1.0);
                if !(x[0] > lo && x[0] < 1.0) {
                    return None;
                }
                Some(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { x[0] }))
            }
            CorrelationStructure::TwoFactor => {
                let (xi, ga) = x.split_at(d);
                if (0..d).any(|i| xi[i] * xi[i] + ga[i] * ga[i] >= 1.0) {
                    return None;
                }
                Some(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { xi[i] * xi[j] + ga[i] * ga[j] }))
            }
            CorrelationStructure::FreeLowerTriangle => {
                let mut l = DMatrix::<f64>::identity(d, d);
                let mut k = 0;
                for i in 1..d {
                    for j in 0..i {
                        l[(i, j)] = x[k];
                        k += 1;
                    }
                }
                for i in 0..d {
                    let s = l.row(i).norm();
                    l.row_mut(i).scale_mut(1.0 / s);
                }
                let mut r = &l * l.transpose();
                r.fill_diagonal(1.0);
                Some(r)
            }
        }
    }

    /// Starting parameters matched to a correlation estimate.
    pub fn start(&self, rho: &DMatrix<f64>) -> Vec<f64> {
        let d = rho.nrows();
        match self {
            CorrelationStructure::Fixed(_) => vec![],
            CorrelationStructure::Equicorrelation => {
                let s: f64 = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|ij| rho[ij]).sum();
                vec![s / (d * (d - 1)) as f64]
            }
            CorrelationStructure::TwoFactor => {
                let e = sym_eigen(rho).expect("valid correlation");
                let mut x = vec![0.0; 2 * d];
                for i in 0..d {
                    let a = e.vectors[(i, 0)] * e.values[0].sqrt();
                    let b = e.vectors[(i, 1)] * e.values[1].max(0.0).sqrt();
                    let s = (a * a + b * b).sqrt().max(1e-12);
                    let shrink = if s > 0.98 { 0.98 / s } else { 1.0 };
                    x[i] = a * shrink;
                    x[d + i] = b * shrink;
                }
                x
            }
            CorrelationStructure::FreeLowerTriangle => {
                let l = rho.clone().cholesky().map(|c| c.l()).unwrap_or_else(|| DMatrix::identity(d, d));
                let mut x = Vec::with_capacity(d * (d - 1) / 2);
                for i in 1..d {
                    for j in 0..i {
                        x.push(l[(i, j)] / l[(i, i)]);
                    }
                }
                x
            }
        }
    }
}

/// Fit `family` with the method chosen in `cfg`.
pub fn fit(u: &CopulaSample, family: CopulaFamily, cfg: &FitConfig) -> Result<FitResult> {
    match cfg.method {
        FitMethod::GmmHybrid => fit_gmm_hybrid(u, family, cfg),
        FitMethod::Mle => {
            let structure = match cfg.structure {
                StructureKind::Fixed => CorrelationStructure::Fixed(init_normal_scores(u)?.0),
                StructureKind::Equicorrelation => CorrelationStructure::Equicorrelation,
                StructureKind::TwoFactor => CorrelationStructure::TwoFactor,
                StructureKind::Free => CorrelationStructure::FreeLowerTriangle,
            };
            fit_mle(u, family, &structure, cfg)
        }
    }
}

/// Joint likelihood over correlation and shape parameters, by simplex.
/// Every evaluation re-decomposes the correlation matrix and rebuilds the
/// marginal tables.
pub fn fit_mle(u: &CopulaSample, family: CopulaFamily, structure: &CorrelationStructure, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let d = u.d;
    let (rho0, _) = init_normal_scores(u)?;
    let nc = structure.n_params(d);
    let build = |x: &[f64]| -> Result<PccModel> {
        let rho = structure
            .matrix(d, &x[..nc])
            .ok_or_else(|| PccError::Domain("correlation parameters outside their domain".into()))?;
        PccModel::new(&rho, family.spec(d, &x[nc..], cfg.link)?, cfg.cos)
    };
    let negll = |x: &[f64]| -> f64 {
        match build(x).and_then(|m| m.copula_log_density(u)) {
            Ok(ld) => -ld.total,
            Err(_) => f64::NAN,
        }
    };
    let mut x0 = structure.start(&rho0);
    x0.extend(family.initial());
    let mut step: Vec<f64> = vec![0.05; nc];
    step.extend(family.steps());
    let (x, f, converged) = if x0.is_empty() {
        (x0.clone(), negll(&x0), true)
    } else {
        let r = nelder_mead(&negll, &x0, &step, cfg.simplex());
        (r.x, r.f, r.converged)
    };
    let model = build(&x)?;
    let ld = model.copula_log_density(u)?;
    let ll = -f;
    let (aic, bic) = aic_bic(ll, family.n_shape(), u.n);
    Ok(FitResult {
        family,
        link: cfg.link,
        theta: x[nc..].to_vec(),
        model,
        loglik: ll,
        aic,
        bic,
        n: u.n,
        iterations: 1,
        converged,
        oscillating: false,
        clipped: ld.clipped,
        trace: vec![],
        bootstrap_sd: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub sd: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
    pub failures: usize,
}

/// Resample rows of the raw `n x d` data, re-rank, re-fit with `recipe`
/// and report the standard deviation of every returned parameter.
/// Failed replicates are skipped and counted.
pub fn bootstrap_se<F>(x: &[f64], n: usize, d: usize, recipe: F, n_boot: usize, seed: u64) -> Result<BootstrapResult>
where
    F: Fn(&CopulaSample) -> Result<Vec<f64>> + Sync + Send,
{
    if n_boot < 10 {
        return Err(PccError::Config(format!("bootstrap needs at least 10 replicates, got {n_boot}")));
    }
    if x.len() != n * d {
        return Err(PccError::Dimension { expected: n * d, got: x.len() });
    }
    let results = map_range(n_boot, |b| {
        let mut rng = block_rng(seed, b as u64);
        let mut xb = Vec::with_capacity(n * d);
        for _ in 0..n {
            let t = rng.random_range(0..n);
            xb.extend_from_slice(&x[t * d..(t + 1) * d]);
        }
        ranks_to_pseudo_obs(&xb, n, d).and_then(|u| recipe(&u))
    });
    let replicates: Vec<Vec<f64>> = results.into_iter().filter_map(|r| r.ok()).collect();
    let failures = n_boot - replicates.len();
    if replicates.len() < 2 {
        return Err(PccError::NotConverged(format!("only {} bootstrap replicates succeeded", replicates.len())));
    }
    let k = replicates[0].len();
    let m = replicates.len() as f64;
    let sd = (0..k)
        .map(|j| {
            let mean = replicates.iter().map(|r| r[j]).sum::<f64>() / m;
            (replicates.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapResult { sd, replicates, failures })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaRow {
    pub label: String,
    pub n_shape: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub delta_aic: f64,
    pub delta_bic: f64,
}

/// AIC and BIC differences against the first fit.
pub fn information_criteria(fits: &[&FitResult]) -> Result<Vec<CriteriaRow>> {
    let Some(first) = fits.first() else { return Ok(vec![]) };
    if let Some(f) = fits.iter().find(|f| f.n != first.n) {
        return Err(PccError::Data(format!("fits use different sample sizes ({} and {})", first.n, f.n)));
    }
    Ok(fits
        .iter()
        .map(|f| CriteriaRow {
            label: f.family.label().to_string(),
            n_shape: f.family.n_shape(),
            loglik: f.loglik,
            aic: f.aic,
            bic: f.bic,
            delta_aic: f.aic - first.aic,
            delta_bic: f.bic - first.bic,
        })
        .collect())
}
