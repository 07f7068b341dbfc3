//! WebAssembly bindings for the demo page: bivariate copula densities on
//! normal-score axes, simulated samples, and HB-N tail dependence.

use nalgebra::DMatrix;
use wasm_bindgen::prelude::*;

use pcc::family::{CopulaFamily, TailLink};
use pcc::pcc::{CopulaSample, PccModel, SampleSource};
use pcc::special::{norm_cdf, norm_pdf};
use pcc::taildep::{default_q_sequence, hb_n_tail_coeffs, numeric_tail_limit, Tail};

/// Half-width of the normal-score axes drawn by the page.
pub const Z_RANGE: f64 = 3.0;

fn shape(family: CopulaFamily, p1: f64, p2: f64) -> Vec<f64> {
    match family.n_shape() {
        0 => vec![],
        1 => vec![p1],
        _ => vec![p1, p2],
    }
}

/// Two-dimensional model with correlation `rho`; `p1, p2` are the family's
/// shape parameters in order (only the first for `t`).
pub fn pair_model(family: &str, rho: f64, p1: f64, p2: f64) -> Result<PccModel, String> {
    let family: CopulaFamily = family.parse().map_err(|e: pcc::PccError| e.to_string())?;
    if family.n_shape() > 2 {
        return Err(format!("{family} needs more than two dimensions"));
    }
    if !(rho.abs() < 1.0) {
        return Err("correlation must lie strictly between -1 and 1".into());
    }
    let spec = family.spec(2, &shape(family, p1, p2), TailLink::Equal).map_err(|e| e.to_string())?;
    PccModel::new(&DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]), spec, None).map_err(|e| e.to_string())
}

/// Density of `(Phi^-1(U1), Phi^-1(U2))` on an `m x m` grid over
/// `[-Z_RANGE, Z_RANGE]^2`, row-major with the first row at the top
/// (largest second coordinate).
pub fn density_on_grid(model: &PccModel, m: usize) -> Result<Vec<f64>, String> {
    if m < 2 {
        return Err("grid needs at least two points per side".into());
    }
    let z = |k: usize| -Z_RANGE + 2.0 * Z_RANGE * k as f64 / (m - 1) as f64;
    let mut u = Vec::with_capacity(2 * m * m);
    for r in 0..m {
        let z2 = z(m - 1 - r);
        for c in 0..m {
            u.push(norm_cdf(z(c)));
            u.push(norm_cdf(z2));
        }
    }
    let sample = CopulaSample::new(m * m, 2, u, SampleSource::Simulated).map_err(|e| e.to_string())?;
    let ld = model.copula_log_density(&sample).map_err(|e| e.to_string())?;
    Ok((0..m * m)
        .map(|k| {
            let (r, c) = (k / m, k % m);
            ld.rows[k].exp() * norm_pdf(z(c)) * norm_pdf(z(m - 1 - r))
        })
        .collect())
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub fn density_grid(family: &str, rho: f64, p1: f64, p2: f64, m: usize) -> Result<Vec<f64>, JsError> {
    let model = pair_model(family, rho, p1, p2).map_err(js)?;
    density_on_grid(&model, m).map_err(js)
}

/// `n` pairs of copula observations, flattened `[u1, v1, u2, v2, ...]`.
#[wasm_bindgen]
pub fn simulate_pairs(family: &str, rho: f64, p1: f64, p2: f64, n: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let model = pair_model(family, rho, p1, p2).map_err(js)?;
    Ok(model.simulate(n, seed as u64).u)
}

/// `[analytic lower, analytic upper, numeric lower, numeric upper, lambda2]`
/// tail dependence of the two-dimensional HB-N copula.
#[wasm_bindgen]
pub fn hb_n_tail(alpha: f64, beta: f64, rho: f64) -> Result<Vec<f64>, JsError> {
    let model = pair_model("hb-n", rho, alpha, beta).map_err(js)?;
    let lambda2 = model.lambda()[1];
    let exact = hb_n_tail_coeffs(alpha, beta, lambda2).map_err(|e| js(e.to_string()))?;
    let q = default_q_sequence();
    let lower = numeric_tail_limit(&model, 0, 1, Tail::Lower, &q).map_err(|e| js(e.to_string()))?;
    let upper = numeric_tail_limit(&model, 0, 1, Tail::Upper, &q).map_err(|e| js(e.to_string()))?;
    Ok(vec![exact.eta_lower, exact.eta_upper, lower.limit, upper.limit, lambda2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_grid_is_bivariate_normal() {
        let m = pair_model("gauss", 0.5, 0.0, 0.0).unwrap();
        let g = density_on_grid(&m, 31).unwrap();
        // centre of the grid is the origin
        let centre = g[15 * 31 + 15];
        let exact = 1.0 / (2.0 * std::f64::consts::PI * (1.0f64 - 0.25).sqrt());
        assert!((centre - exact).abs() < 1e-6, "{centre} vs {exact}");
        // mass over the square is close to one
        let h = 2.0 * Z_RANGE / 30.0;
        let mass: f64 = g.iter().sum::<f64>() * h * h;
        assert!((mass - 1.0).abs() < 0.03, "{mass}");
    }

    #[test]
    fn hb_n_grid_is_lower_tail_heavy() {
        let m = pair_model("hb-n", 0.6, 2.5, -1.0).unwrap();
        let g = density_on_grid(&m, 41).unwrap();
        let corner = |r: usize, c: usize| g[r * 41 + c];
        // bottom-left (joint losses) against top-right (joint gains)
        assert!(corner(38, 2) > corner(2, 38));
    }

    #[test]
    fn page_defaults_cover_correlation_range() {
        for rho in [-0.95, -0.5, 0.0, 0.3, 0.6, 0.95] {
            pair_model("hb-n", rho, 2.5, -1.0).unwrap();
            pair_model("skew-t1-t1", rho, 8.0, -0.2).unwrap();
            pair_model("t", rho, 6.0, 0.0).unwrap();
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pair_model("gauss", 1.0, 0.0, 0.0).is_err());
        assert!(pair_model("hb-hb-n", 0.3, 1.0, 0.0).is_err());
        assert!(pair_model("hb-n", 0.3, 0.5, 0.9).is_err());
        assert!(pair_model("nonsense", 0.3, 1.0, 0.0).is_err());
    }

    #[test]
    fn samples_are_uniform_pairs() {
        let m = pair_model("skew-t1-t1", 0.4, 8.0, -1.0).unwrap();
        let s = m.simulate(2000, 1).u;
        assert_eq!(s.len(), 4000);
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
