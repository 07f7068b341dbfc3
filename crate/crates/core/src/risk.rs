//! Joint-distress statistics over the (quantile, market fraction, dimension)
//! cube, and one-sided binomial tests of model distress probabilities
//! against historical counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::block_rng;
use crate::error::{PccError, Result};
use crate::par::map_range;
use crate::pcc::{CopulaSample, PccModel, SampleSource};
use crate::special::ln_gamma;

/// Fraction of the entries of `u_row` at or below `q`.
pub fn mdr(u_row: &[f64], q: f64) -> f64 {
    if u_row.is_empty() {
        return 0.0;
    }
    u_row.iter().filter(|&&v| v <= q).count() as f64 / u_row.len() as f64
}

/// Whether at least `k` of the `subset` coordinates of `row` are at or below `q`.
fn distressed(row: &[f64], q: f64, k: usize, subset: &[usize]) -> bool {
    let mut hits = 0;
    for (seen, &i) in subset.iter().enumerate() {
        if row[i] <= q {
            hits += 1;
            if hits >= k {
                return true;
            }
        }
        // not enough coordinates left to reach k
        if hits + subset.len() - seen - 1 < k {
            return false;
        }
    }
    hits >= k
}

/// Number of rows in which at least `k` coordinates of `subset` are at or
/// below `q`.
pub fn mdi_count(u: &CopulaSample, q: f64, k: usize, subset: &[usize]) -> Result<usize> {
    check_cell(u.d, q, k, subset)?;
    Ok((0..u.n).filter(|&t| distressed(u.row(t), q, k, subset)).count())
}

/// Relative frequency of rows with at least `k` of `subset` in distress.
pub fn mdf(u: &CopulaSample, q: f64, k: usize, subset: &[usize]) -> Result<f64> {
    Ok(mdi_count(u, q, k, subset)? as f64 / u.n as f64)
}

fn check_cell(d: usize, q: f64, k: usize, subset: &[usize]) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(PccError::Domain(format!("quantile must lie in (0, 1), got {q}")));
    }
    if k == 0 || k > subset.len() {
        return Err(PccError::Domain(format!("k = {k} must lie in 1..={}", subset.len())));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= d) {
        return Err(PccError::Dimension { expected: d, got: i + 1 });
    }
    Ok(())
}

/// `P[Bin(n, p) >= count]`, summed in log space from the mode outwards.
pub fn binomial_distress_test(count: u64, n: u64, p: f64) -> Result<f64> {
    if count > n {
        return Err(PccError::Domain(format!("count {count} exceeds n {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(PccError::Domain(format!("probability must lie in [0, 1], got {p}")));
    }
    if count == 0 || p == 1.0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let ln_pmf = |k: u64| {
        let kf = k as f64;
        ln_gamma(nf + 1.0) - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0) + kf * lp + (nf - kf) * lq
    };
    let terms: Vec<f64> = (count..=n).map(ln_pmf).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
    Ok((m + s.ln()).exp().min(1.0))
}

/// Something that can produce copula samples for the cube.
pub trait DistressModel: Sync {
    fn sample(&self, n: usize, seed: u64) -> Result<CopulaSample>;
}

impl DistressModel for PccModel {
    fn sample(&self, n: usize, seed: u64) -> Result<CopulaSample> {
        Ok(self.simulate(n, seed))
    }
}

/// Rows drawn with replacement from a fixed sample.
pub struct EmpiricalResample(pub CopulaSample);

impl DistressModel for EmpiricalResample {
    fn sample(&self, n: usize, seed: u64) -> Result<CopulaSample> {
        Ok(resample(&self.0, n, seed))
    }
}

fn resample(u: &CopulaSample, n: usize, seed: u64) -> CopulaSample {
    let mut rng = block_rng(seed, 0);
    let mut out = Vec::with_capacity(n * u.d);
    for _ in 0..n {
        out.extend_from_slice(u.row(rng.random_range(0..u.n)));
    }
    CopulaSample { n, d: u.d, u: out, source: SampleSource::Simulated }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DistressConfig {
    pub q_grid: Vec<f64>,
    pub k_over_d_grid: Vec<f64>,
    /// Quantile held fixed along the fraction and dimension axes.
    pub fixed_q: f64,
    /// Nested index subsets for the dimension axis; prefixes `0..m` for
    /// `m = 2..=d` when absent.
    pub d_subsets: Option<Vec<Vec<usize>>>,
    /// Extra `(q, k/d)` cells on the full index set, tested alongside the axes.
    pub test_cells: Vec<(f64, f64)>,
    pub n_sim: usize,
    pub n_boot: usize,
}

impl Default for DistressConfig {
    fn default() -> Self {
        Self {
            q_grid: vec![0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.25, 0.3],
            k_over_d_grid: (1..=10).map(|i| i as f64 / 10.0).collect(),
            fixed_q: 0.2,
            d_subsets: None,
            test_cells: vec![(0.15, 1.0), (0.2, 1.0), (0.15, 0.9), (0.2, 0.9)],
            n_sim: 200_000,
            n_boot: 1000,
        }
    }
}

fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl DistressConfig {
    pub fn validate(&self, d: usize) -> Result<Vec<Vec<usize>>> {
        let bad = |m: String| Err(PccError::Config(m));
        if self.q_grid.is_empty() || !strictly_increasing(&self.q_grid) {
            return bad("q_grid must be nonempty and strictly increasing".into());
        }
        if self.q_grid.iter().chain([&self.fixed_q]).any(|&q| !(q > 0.0 && q <= 0.5)) {
            return bad("quantiles must lie in (0, 0.5]".into());
        }
        if self.k_over_d_grid.is_empty() || !strictly_increasing(&self.k_over_d_grid) {
            return bad("k_over_d_grid must be nonempty and strictly increasing".into());
        }
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !self.k_over_d_grid.iter().all(|&f| frac_ok(f)) {
            return bad("market fractions must lie in (0, 1]".into());
        }
        for &(q, f) in &self.test_cells {
            if !(q > 0.0 && q <= 0.5 && frac_ok(f)) {
                return bad(format!("invalid test cell ({q}, {f})"));
            }
        }
        if self.n_sim == 0 {
            return bad("n_sim must be positive".into());
        }
        let subsets = match &self.d_subsets {
            None => (2.min(d)..=d).map(|m| (0..m).collect()).collect(),
            Some(s) => s.clone(),
        };
        if subsets.is_empty() {
            return bad("dimension axis has no subsets".into());
        }
        for (a, b) in subsets.iter().zip(subsets.iter().skip(1)) {
            if b.len() <= a.len() || !a.iter().all(|i| b.contains(i)) {
                return bad("dimension subsets must be strictly nested".into());
            }
        }
        for s in &subsets {
            if s.is_empty() || s.iter().any(|&i| i >= d) {
                return bad(format!("subset {s:?} is empty or exceeds dimension {d}"));
            }
            let mut t = s.clone();
            t.sort_unstable();
            t.dedup();
            if t.len() != s.len() {
                return bad(format!("subset {s:?} repeats an index"));
            }
        }
        Ok(subsets)
    }
}

/// Smallest count `k` with `k / m >= frac`.
pub fn k_for_fraction(frac: f64, m: usize) -> usize {
    ((frac * m as f64 - 1e-9).ceil() as usize).clamp(1, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Quantile,
    Fraction,
    Dimension,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellSpec {
    axis: Axis,
    q: f64,
    k: usize,
    subset: Vec<usize>,
}

/// One cell of the cube for one source. `count` is always the historical
/// count; `mdf` is the empirical frequency on the `empirical` row and the
/// simulated model frequency otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubeCell {
    pub model: String,
    pub axis: Axis,
    pub q: f64,
    pub k: usize,
    pub d: usize,
    pub mdf: f64,
    pub count: usize,
    pub p_value: Option<f64>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistressReport {
    pub n: usize,
    pub d: usize,
    pub n_sim: usize,
    pub n_boot: usize,
    pub cells: Vec<CubeCell>,
}

impl DistressReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| PccError::Numeric(e.to_string()))
    }

    pub fn cells_for<'a>(&'a self, model: &'a str) -> impl Iterator<Item = &'a CubeCell> + 'a {
        self.cells.iter().filter(move |c| c.model == model)
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const EMPIRICAL: &str = "empirical";

/// Empirical and model MDF across the cube. Bands are 5%/95% percentiles
/// of the empirical MDF over row-bootstrap replicates of `u_hist`.
pub fn distress_cube(
    u_hist: &CopulaSample,
    models: &[(String, &dyn DistressModel)],
    cfg: &DistressConfig,
    seed: u64,
) -> Result<DistressReport> {
    let d = u_hist.d;
    let subsets = cfg.validate(d)?;
    let full: Vec<usize> = (0..d).collect();
    let mut cells = Vec::new();
    for &q in &cfg.q_grid {
        cells.push(CellSpec { axis: Axis::Quantile, q, k: d, subset: full.clone() });
    }
    for &f in &cfg.k_over_d_grid {
        cells.push(CellSpec { axis: Axis::Fraction, q: cfg.fixed_q, k: k_for_fraction(f, d), subset: full.clone() });
    }
    for s in &subsets {
        cells.push(CellSpec { axis: Axis::Dimension, q: cfg.fixed_q, k: s.len(), subset: s.clone() });
    }
    for &(q, f) in &cfg.test_cells {
        cells.push(CellSpec { axis: Axis::Test, q, k: k_for_fraction(f, d), subset: full.clone() });
    }

    // historical indicator per (cell, row), reused by every bootstrap replicate
    let n = u_hist.n;
    let hits: Vec<Vec<bool>> =
        map_range(cells.len(), |c| (0..n).map(|t| distressed(u_hist.row(t), cells[c].q, cells[c].k, &cells[c].subset)).collect());
    let counts: Vec<usize> = hits.iter().map(|h| h.iter().filter(|&&b| b).count()).collect();

    let bands: Vec<Option<(f64, f64)>> = if cfg.n_boot > 0 {
        let reps: Vec<Vec<f64>> = map_range(cfg.n_boot, |b| {
            let mut rng = block_rng(seed, 1 + b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            hits.iter().map(|h| idx.iter().filter(|&&t| h[t]).count() as f64 / n as f64).collect()
        });
        (0..cells.len())
            .map(|c| {
                let mut v: Vec<f64> = reps.iter().map(|r| r[c]).collect();
                v.sort_by(f64::total_cmp);
                Some((percentile(&v, 0.05), percentile(&v, 0.95)))
            })
            .collect()
    } else {
        vec![None; cells.len()]
    };

    let mut out = Vec::new();
    for (c, spec) in cells.iter().enumerate() {
        out.push(CubeCell {
            model: EMPIRICAL.into(),
            axis: spec.axis,
            q: spec.q,
            k: spec.k,
            d: spec.subset.len(),
            mdf: counts[c] as f64 / n as f64,
            count: counts[c],
            p_value: None,
            band_lo: bands[c].map(|b| b.0),
            band_hi: bands[c].map(|b| b.1),
        });
    }
    for (m, (name, model)) in models.iter().enumerate() {
        // model seeds live far away from the bootstrap blocks
        let sim = model.sample(cfg.n_sim, seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(m as u64 + 1)))?;
        if sim.d != d {
            return Err(PccError::Dimension { expected: d, got: sim.d });
        }
        let freq: Vec<f64> = map_range(cells.len(), |c| {
            let s = &cells[c];
            (0..sim.n).filter(|&t| distressed(sim.row(t), s.q, s.k, &s.subset)).count() as f64 / sim.n as f64
        });
        for (c, spec) in cells.iter().enumerate() {
            out.push(CubeCell {
                model: name.clone(),
                axis: spec.axis,
                q: spec.q,
                k: spec.k,
                d: spec.subset.len(),
                mdf: freq[c],
                count: counts[c],
                p_value: Some(binomial_distress_test(counts[c] as u64, n as u64, freq[c])?),
                band_lo: None,
                band_hi: None,
            });
        }
    }
    Ok(DistressReport { n, d, n_sim: cfg.n_sim, n_boot: cfg.n_boot, cells: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::GroupSpec;
    use nalgebra::DMatrix;
    use proptest::prelude::{prop_assert, proptest};
    use statrs::distribution::{Binomial, DiscreteCDF};

    fn independent(n: usize, d: usize, seed: u64) -> CopulaSample {
        let mut rng = block_rng(seed, 0);
        let u = (0..n * d).map(|_| rng.random_range(1e-12..1.0)).collect();
        CopulaSample::new(n, d, u, SampleSource::Simulated).unwrap()
    }

    #[test]
    fn mdr_counts() {
        assert_eq!(mdr(&[0.1, 0.2, 0.05], 0.2), 1.0);
        assert_eq!(mdr(&[0.3, 0.4], 0.2), 0.0);
        assert_eq!(mdr(&[0.1, 0.5, 0.9, 0.15], 0.2), 0.5);
    }

    #[test]
    fn independence_and_comonotone_mdf() {
        let u = independent(200_000, 3, 5);
        let f = mdf(&u, 0.3, 3, &[0, 1, 2]).unwrap();
        assert!((f - 0.027).abs() < 4.0 * (0.027f64 * 0.973 / 200_000.0).sqrt());
        let mut rng = block_rng(6, 0);
        let co: Vec<f64> = (0..10_000).flat_map(|_| vec![rng.random_range(1e-9..1.0); 4]).collect();
        let co = CopulaSample::new(10_000, 4, co, SampleSource::Simulated).unwrap();
        let base = mdf(&co, 0.2, 1, &[0, 1, 2, 3]).unwrap();
        for k in 2..=4 {
            assert_eq!(mdf(&co, 0.2, k, &[0, 1, 2, 3]).unwrap(), base);
        }
    }

    #[test]
    fn binomial_tail_matches_statrs() {
        assert_eq!(binomial_distress_test(0, 1303, 0.01).unwrap(), 1.0);
        for &(c, n, p) in &[(16u64, 1303u64, 0.01), (3, 50, 0.2), (44, 1303, 0.02), (1, 10, 0.5), (900, 1000, 0.5)] {
            let b = Binomial::new(p, n).unwrap();
            let want = b.sf(c - 1);
            let got = binomial_distress_test(c, n, p).unwrap();
            if want > 1e-300 {
                assert!((got - want).abs() <= 1e-10 * want.max(1e-3), "{c} {n} {p}: {got} vs {want}");
            } else {
                assert!(got < 1e-250);
            }
        }
        assert!(binomial_distress_test(5, 4, 0.1).is_err());
    }

    #[test]
    fn cube_axes_and_bands() {
        let rho = DMatrix::from_fn(6, 6, |i, j| if i == j { 1.0 } else { 0.5 });
        let model = PccModel::new(&rho, GroupSpec::gaussian(6), None).unwrap();
        let u = model.simulate(800, 3);
        let cfg = DistressConfig { n_sim: 20_000, n_boot: 200, ..Default::default() };
        let rep = distress_cube(&u, &[("gauss".to_string(), &model as &dyn DistressModel)], &cfg, 9).unwrap();
        for src in [EMPIRICAL, "gauss"] {
            let q: Vec<f64> = rep.cells_for(src).filter(|c| c.axis == Axis::Quantile).map(|c| c.mdf).collect();
            assert!(q.windows(2).all(|w| w[0] <= w[1]), "{src} q axis {q:?}");
            let k: Vec<f64> = rep.cells_for(src).filter(|c| c.axis == Axis::Fraction).map(|c| c.mdf).collect();
            assert!(k.windows(2).all(|w| w[0] >= w[1]), "{src} k axis {k:?}");
            let dd: Vec<f64> = rep.cells_for(src).filter(|c| c.axis == Axis::Dimension).map(|c| c.mdf).collect();
            assert!(dd.windows(2).all(|w| w[0] >= w[1]), "{src} d axis {dd:?}");
        }
        for c in &rep.cells {
            assert!((0.0..=1.0).contains(&c.mdf) && c.count <= rep.n);
            if let (Some(lo), Some(hi)) = (c.band_lo, c.band_hi) {
                assert!(lo <= c.mdf + 1e-12 && c.mdf <= hi + 1e-12);
            }
        }
        let bad = DistressConfig { d_subsets: Some(vec![vec![0, 1], vec![2, 3, 4]]), ..cfg };
        assert!(matches!(distress_cube(&u, &[], &bad, 1), Err(PccError::Config(_))));
    }

    fn equicorrelated(d: usize, r: f64) -> PccModel {
        let rho = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { r });
        PccModel::new(&rho, GroupSpec::gaussian(d), None).unwrap()
    }

    #[test]
    fn self_consistent_model_is_rarely_rejected() {
        // samples from a model, tested against a large resample of that same model
        let truth = equicorrelated(10, 0.6);
        let reference = EmpiricalResample(truth.simulate(200_000, 77));
        let cfg = DistressConfig { q_grid: vec![0.2], k_over_d_grid: vec![1.0], n_sim: 100_000, n_boot: 0, ..Default::default() };
        let runs = 200;
        let mut clean = 0;
        for r in 0..runs {
            let u = truth.simulate(1303, 1000 + r);
            let rep = distress_cube(&u, &[("ref".to_string(), &reference as &dyn DistressModel)], &cfg, r).unwrap();
            let min_p = rep.cells_for("ref").filter(|c| c.axis == Axis::Test).filter_map(|c| c.p_value).fold(1.0, f64::min);
            if min_p >= 0.01 {
                clean += 1;
            }
        }
        assert!(clean as f64 >= 0.95 * runs as f64, "{clean}/{runs} runs without rejection");
    }

    #[test]
    fn model_mdf_stable_under_doubling() {
        let model = equicorrelated(8, 0.5);
        let u = model.simulate(500, 1);
        let n_sim = 50_000;
        let run = |m: usize| {
            let cfg = DistressConfig { n_sim: m, n_boot: 0, ..Default::default() };
            distress_cube(&u, &[("m".to_string(), &model as &dyn DistressModel)], &cfg, 4).unwrap()
        };
        let (a, b) = (run(n_sim), run(2 * n_sim));
        let fa: Vec<f64> = a.cells_for("m").map(|c| c.mdf).collect();
        let fb: Vec<f64> = b.cells_for("m").map(|c| c.mdf).collect();
        let ok = fa.iter().zip(&fb).filter(|(x, y)| (*x - *y).abs() < 2.0 / (n_sim as f64).sqrt()).count();
        assert!(ok as f64 >= 0.95 * fa.len() as f64, "{ok}/{}", fa.len());
    }

    proptest! {
        #[test]
        fn p_value_decreasing_in_count(n in 1u64..400, p in 0.001f64..0.999) {
            let mut prev = 1.0;
            for c in 0..=n {
                let v = binomial_distress_test(c, n, p).unwrap();
                prop_assert!(v <= prev + 1e-12);
                prev = v;
            }
        }

        #[test]
        fn mdf_monotone_on_any_sample(seed in 0u64..1000, q1 in 0.01f64..0.25, dq in 0.0f64..0.25) {
            let u = independent(300, 5, seed);
            let full = [0, 1, 2, 3, 4];
            let q2 = q1 + dq;
            for k in 1..=5 {
                prop_assert!(mdf(&u, q1, k, &full).unwrap() <= mdf(&u, q2, k, &full).unwrap());
                if k < 5 {
                    prop_assert!(mdf(&u, q1, k + 1, &full).unwrap() <= mdf(&u, q1, k, &full).unwrap());
                }
            }
            for m in 1..5 {
                prop_assert!(mdf(&u, q1, m + 1, &full[..m + 1]).unwrap() <= mdf(&u, q1, m, &full[..m]).unwrap());
            }
        }
    }
}
