//! Tail dependence: closed-form coefficients for the hyperbolic-normal
//! copula, a numeric limit of `C(q, q) / q` for two-dimensional models with
//! scalar generators, and the Monte Carlo joint-exceedance estimator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::{HyperbolicParams, ResolvedLaw, SkewTGroup};
use crate::error::{PccError, Result};
use crate::optim::brent_root;
use crate::pcc::{CopulaSample, PccModel};
use crate::quad::{integrate, QuadOptions};
use crate::special::{norm_cdf, norm_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailMethod {
    Analytic,
    NumericLimit,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCoefficients {
    pub eta_lower: f64,
    pub eta_upper: f64,
    pub method: TailMethod,
}

/// Tail dependence of the two-dimensional hyperbolic-normal copula:
/// `eta_l = 2 Phi(-(alpha + beta) sqrt(lambda2))` and
/// `eta_u = 2 Phi(-(alpha - beta) sqrt(lambda2))`.
pub fn hb_n_tail_coeffs(alpha1: f64, beta1: f64, lambda2: f64) -> Result<TailCoefficients> {
    if !(alpha1 > beta1.abs()) || !(lambda2 > 0.0) || !lambda2.is_finite() {
        return Err(PccError::Domain(format!(
            "need alpha > |beta| and lambda2 > 0, got ({alpha1}, {beta1}, {lambda2})"
        )));
    }
    let s = lambda2.sqrt();
    Ok(TailCoefficients {
        eta_lower: 2.0 * norm_cdf(-(alpha1 + beta1) * s),
        eta_upper: 2.0 * norm_cdf(-(alpha1 - beta1) * s),
        method: TailMethod::Analytic,
    })
}

/// Default quantile levels for the numeric limit, `1e-4` down to `1e-12`.
pub fn default_q_sequence() -> Vec<f64> {
    (4..=12).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailLimit {
    pub tail: Tail,
    pub q: Vec<f64>,
    /// Quantile of the first margin at each level.
    pub y: Vec<f64>,
    /// `C(q, q) / q` (or its upper-tail analogue) at each level.
    pub values: Vec<f64>,
    pub limit: f64,
    /// Some levels failed and were dropped.
    pub truncated: bool,
}

enum ScalarLaw {
    Normal(f64),
    Hyperbolic(HyperbolicParams),
    SkewT(SkewTGroup),
}

impl ScalarLaw {
    fn pdf(&self, x: f64) -> f64 {
        match self {
            ScalarLaw::Normal(s) => norm_pdf(x / s) / s,
            ScalarLaw::Hyperbolic(h) => h.pdf(x),
            ScalarLaw::SkewT(t) => t.ln_pdf(&[x]).exp(),
        }
    }
    fn cdf(&self, x: f64) -> f64 {
        match self {
            ScalarLaw::Normal(s) => norm_cdf(x / s),
            ScalarLaw::Hyperbolic(h) => h.cdf(x),
            ScalarLaw::SkewT(t) => t.cdf1(x),
        }
    }
    fn sf(&self, x: f64) -> f64 {
        match self {
            ScalarLaw::Normal(s) => norm_cdf(-x / s),
            ScalarLaw::Hyperbolic(h) => h.sf(x),
            ScalarLaw::SkewT(t) => t.sf1(x),
        }
    }
    fn center(&self) -> f64 {
        match self {
            ScalarLaw::Normal(_) => 0.0,
            ScalarLaw::Hyperbolic(h) => h.mode(),
            ScalarLaw::SkewT(t) => t.mu[0],
        }
    }
    /// `P(lo < X <= hi)`, computed from the nearer tail.
    fn interval(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if lo > self.center() {
            (self.sf(lo) - self.sf(hi)).max(0.0)
        } else {
            (self.cdf(hi) - self.cdf(lo)).max(0.0)
        }
    }
}

/// Two scalar generators and the 2x2 loading matrix of a model.
struct Pair {
    p1: ScalarLaw,
    p2: ScalarLaw,
    w: DMatrix<f64>,
}

impl Pair {
    fn from_model(model: &PccModel) -> Result<Self> {
        if model.dim() != 2 {
            return Err(PccError::Config(format!(
                "numeric tail limit supports two-dimensional models only, got d={}",
                model.dim()
            )));
        }
        let mut laws: [Option<ScalarLaw>; 2] = [None, None];
        for g in &model.generators().groups {
            match &g.law {
                ResolvedLaw::Normal { var } => {
                    for (&i, v) in g.indices.iter().zip(var) {
                        laws[i] = Some(ScalarLaw::Normal(v.sqrt()));
                    }
                }
                ResolvedLaw::Hyperbolic(h) => laws[g.indices[0]] = Some(ScalarLaw::Hyperbolic(*h)),
                ResolvedLaw::SkewT(t) if t.dim() == 1 => laws[g.indices[0]] = Some(ScalarLaw::SkewT(t.clone())),
                ResolvedLaw::SkewT(_) => {
                    return Err(PccError::Config("numeric tail limit needs independent scalar generators".into()))
                }
            }
        }
        let [Some(p1), Some(p2)] = laws else {
            return Err(PccError::Config("generator laws incomplete".into()));
        };
        Ok(Pair { p1, p2, w: model.w().clone() })
    }

    /// Probability that `w_k2 P2` is below `c_k` (lower) or above it (upper)
    /// for every listed row `k`, integrated against the density of `P1`.
    fn prob(&self, rows: &[(usize, f64)], tail: Tail) -> (f64, bool) {
        let inner = |p: f64| -> f64 {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for &(k, c) in rows {
                let (a, b) = (self.w[(k, 0)], self.w[(k, 1)]);
                let r = c - a * p;
                // lower: b P2 <= r ; upper: b P2 > r
                let below = (b > 0.0) == (tail == Tail::Lower);
                if b == 0.0 {
                    let ok = if tail == Tail::Lower { r >= 0.0 } else { r < 0.0 };
                    if !ok {
                        return 0.0;
                    }
                } else if below {
                    hi = hi.min(r / b);
                } else {
                    lo = lo.max(r / b);
                }
            }
            if hi <= lo {
                return 0.0;
            }
            self.p1.pdf(p) * self.p2.interval(lo, hi)
        };
        let mut cuts = vec![self.p1.center()];
        for &(k, c) in rows {
            let (a, b) = (self.w[(k, 0)], self.w[(k, 1)]);
            if a != 0.0 {
                cuts.push((c - b * self.p2.center()) / a);
                cuts.push(c / a);
            }
        }
        cuts.retain(|v| v.is_finite());
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let opt = QuadOptions { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 2000 };
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(cuts);
        edges.push(f64::INFINITY);
        let parts: Vec<_> = edges.windows(2).map(|e| integrate(inner, e[0], e[1], opt)).collect();
        let total: f64 = parts.iter().map(|r| r.value).sum();
        let err: f64 = parts.iter().map(|r| r.error).sum();
        (total, err <= 1e-6 * total.abs() || total == 0.0)
    }

    fn marginal(&self, i: usize, y: f64, tail: Tail) -> f64 {
        self.prob(&[(i, y)], tail).0
    }

    fn quantile(&self, i: usize, q: f64, tail: Tail) -> Option<f64> {
        let lnq = q.ln();
        let g = |y: f64| self.marginal(i, y, tail).max(1e-300).ln() - lnq;
        // widen geometrically until the sign changes, then polish with Brent
        let g0 = g(0.0);
        let mut far: f64 = if tail == Tail::Lower { -8.0 } else { 8.0 };
        while far.abs() < 2000.0 && g(far).signum() == g0.signum() {
            far *= 2.0;
        }
        let (a, b) = if far < 0.0 { (far, 0.0) } else { (0.0, far) };
        brent_root(g, a, b, 1e-12)
    }
}

/// Least-squares quadratic in `s` through `(s, v)`; returns the intercept.
fn quadratic_intercept(s: &[f64], v: &[f64]) -> f64 {
    let n = s.len();
    if n < 3 {
        return *v.last().unwrap_or(&f64::NAN);
    }
    let a = DMatrix::from_fn(n, 3, |r, c| s[r].powi(c as i32));
    let b = nalgebra::DVector::from_column_slice(v);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14).map(|x| x[0]).unwrap_or(f64::NAN)
}

/// `C(q, q) / q` (lower) or `P(U_i > 1-q, U_j > 1-q) / q` (upper) of a
/// two-dimensional model along `q_sequence`, by one-dimensional integration
/// over the first generator, and its limit as `q -> 0`.
///
/// The limit is the intercept of a quadratic fit in `1/|y_q|` through the
/// last five levels, where `y_q` is the quantile of margin `i`; the
/// approach to the limit is smooth in that variable rather than in `q`.
pub fn numeric_tail_limit(model: &PccModel, i: usize, j: usize, tail: Tail, q_sequence: &[f64]) -> Result<TailLimit> {
    if i == j || i > 1 || j > 1 {
        return Err(PccError::Config(format!("need a distinct pair of indices in a two-dimensional model, got ({i}, {j})")));
    }
    if q_sequence.iter().any(|q| !(*q > 0.0 && *q <= 0.05)) {
        return Err(PccError::Config("quantile levels must lie in (0, 0.05]".into()));
    }
    let pair = Pair::from_model(model)?;
    let mut out = TailLimit { tail, q: vec![], y: vec![], values: vec![], limit: f64::NAN, truncated: false };
    for &q in q_sequence {
        let (Some(a), Some(b)) = (pair.quantile(i, q, tail), pair.quantile(j, q, tail)) else {
            out.truncated = true;
            continue;
        };
        let (c, ok) = pair.prob(&[(i, a), (j, b)], tail);
        if !ok || !c.is_finite() {
            out.truncated = true;
            continue;
        }
        out.q.push(q);
        out.y.push(a);
        out.values.push(c / q);
    }
    let k = out.values.len();
    if k == 0 {
        return Err(PccError::Numeric("no quantile level could be evaluated".into()));
    }
    let from = k.saturating_sub(5);
    let s: Vec<f64> = out.y[from..].iter().map(|y| 1.0 / y.abs()).collect();
    out.limit = quadratic_intercept(&s, &out.values[from..]).clamp(0.0, 1.0);
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpjqeMatrix {
    pub q: f64,
    pub d: usize,
    pub tail: Tail,
    /// Row-major `d x d`.
    pub eta: Vec<f64>,
    pub n: usize,
    /// `n q < 10`: too few expected exceedances to trust.
    pub unreliable: bool,
}

impl CpjqeMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.eta[i * self.d + j]
    }
}

/// `eta_ij = (1/(n q)) sum_t 1{u_i <= q, u_j <= q}` (or `> 1-q` for the
/// upper tail).
pub fn mc_cpjqe(u: &CopulaSample, q: f64, tail: Tail) -> Result<CpjqeMatrix> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(PccError::Config(format!("q must lie in (0, 0.5], got {q}")));
    }
    let d = u.d;
    let hit = |v: f64| match tail {
        Tail::Lower => v <= q,
        Tail::Upper => v > 1.0 - q,
    };
    let mut counts = vec![0u64; d * d];
    let mut flags = vec![false; d];
    for t in 0..u.n {
        for (f, &v) in flags.iter_mut().zip(u.row(t)) {
            *f = hit(v);
        }
        for a in 0..d {
            if flags[a] {
                for b in a..d {
                    if flags[b] {
                        counts[a * d + b] += 1;
                    }
                }
            }
        }
    }
    let denom = u.n as f64 * q;
    let mut eta = vec![0.0; d * d];
    for a in 0..d {
        for b in a..d {
            let v = counts[a * d + b] as f64 / denom;
            eta[a * d + b] = v;
            eta[b * d + a] = v;
        }
    }
    Ok(CpjqeMatrix { q, d, tail, eta, n: u.n, unreliable: denom < 10.0 })
}

/// Model-implied joint exceedance from a fresh simulation of `n_sim` rows.
pub fn model_cpjqe(model: &PccModel, q: f64, tail: Tail, n_sim: usize, seed: u64) -> Result<CpjqeMatrix> {
    mc_cpjqe(&model.simulate(n_sim, seed), q, tail)
}
