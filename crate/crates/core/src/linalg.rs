//! Small dense linear-algebra helpers around `nalgebra`: ordered symmetric
//! eigendecomposition with a deterministic sign convention, positive
//! semi-definite projection and sample correlation.

use nalgebra::DMatrix;

use crate::error::{PccError, Result};

/// Eigenvalues in descending order with unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Flip each column so that its entry of largest magnitude is positive.
/// Ties go to the first index.
pub fn orient_columns(w: &mut DMatrix<f64>) {
    for mut col in w.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn argmax_abs(v: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best.0
}

/// Symmetric eigendecomposition sorted by descending eigenvalue. Exactly
/// equal eigenvalues are ordered by the position of each vector's largest
/// weight.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<Eigen> {
    if !m.is_square() {
        return Err(PccError::Dimension { expected: m.nrows(), got: m.ncols() });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PccError::Numeric("matrix has non-finite entries".into()));
    }
    let sym = 0.5 * (m + m.transpose());
    let e = sym.symmetric_eigen();
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    let key: Vec<usize> = (0..d).map(|j| argmax_abs(e.eigenvectors.column(j).iter().copied())).collect();
    order.sort_by(|&i, &j| {
        e.eigenvalues[j]
            .partial_cmp(&e.eigenvalues[i])
            .expect("finite eigenvalues")
            .then(key[i].cmp(&key[j]))
    });
    let values = order.iter().map(|&j| e.eigenvalues[j]).collect();
    let mut vectors = DMatrix::from_fn(d, d, |r, c| e.eigenvectors[(r, order[c])]);
    orient_columns(&mut vectors);
    Ok(Eigen { values, vectors })
}

/// Rescale a symmetric matrix with positive diagonal to unit diagonal.
pub fn to_correlation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    let s: Vec<f64> = (0..d).map(|i| m[(i, i)]).collect();
    if s.iter().any(|v| !(*v > 0.0)) {
        return Err(PccError::Numeric("non-positive diagonal in moment matrix".into()));
    }
    let mut r = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]) / (s[i] * s[j]).sqrt());
    r.fill_diagonal(1.0);
    Ok(r)
}

/// Nearest valid correlation matrix by eigenvalue flooring: eigenvalues
/// below `floor` are raised to it, the matrix is rebuilt and rescaled to unit
/// diagonal. A matrix whose spectrum already clears the floor comes back
/// unchanged apart from symmetrization.
pub fn psd_project(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let e = sym_eigen(m)?;
    if e.values.last().is_some_and(|v| *v >= floor) {
        return Ok(0.5 * (m + m.transpose()));
    }
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        e.values.len(),
        e.values.iter().map(|v| v.max(floor)),
    ));
    let rebuilt = &e.vectors * lam * e.vectors.transpose();
    to_correlation(&rebuilt)
}

/// Pearson correlation of the columns of a row-major `n x d` matrix.
pub fn sample_correlation(data: &[f64], n: usize, d: usize) -> Result<DMatrix<f64>> {
    let x = DMatrix::from_row_slice(n, d, data);
    let means: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - means[j]);
    let cov = centered.transpose() * &centered;
    to_correlation(&cov)
}

/// Raw second-moment matrix `X'X / n` of a row-major `n x d` matrix.
pub fn second_moment(data: &[f64], n: usize, d: usize) -> DMatrix<f64> {
    let x = DMatrix::from_row_slice(n, d, data);
    x.transpose() * x / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_order_and_signs() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.6, 0.3, 0.6, 1.0, 0.2, 0.3, 0.2, 1.0]);
        let e = sym_eigen(&m).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let rebuilt = &e.vectors * DMatrix::from_diagonal(&e.values.clone().into()) * e.vectors.transpose();
        assert!((rebuilt - &m).amax() < 1e-12);
        let wtw = e.vectors.transpose() * &e.vectors;
        assert!((wtw - DMatrix::identity(3, 3)).amax() < 1e-12);
        for col in e.vectors.column_iter() {
            assert!(col[argmax_abs(col.iter().copied())] > 0.0);
        }
    }

    #[test]
    fn two_dim_first_vector_is_parallel() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let e = sym_eigen(&m).unwrap();
        let s = 0.5f64.sqrt();
        assert!((e.vectors[(0, 0)] - s).abs() < 1e-14 && (e.vectors[(1, 0)] - s).abs() < 1e-14);
        assert!((e.values[0] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn projection_fixes_indefinite_matrix_and_is_idempotent() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let p = psd_project(&m, 1e-8).unwrap();
        let e = sym_eigen(&p).unwrap();
        assert!(e.values[2] > -1e-12);
        assert!((0..3).all(|i| p[(i, i)] == 1.0));
        let q = psd_project(&p, 0.0).unwrap();
        assert!((&q - &p).amax() < 1e-12);
    }

    #[test]
    fn correlation_of_linear_columns() {
        let data: Vec<f64> = (0..50).flat_map(|i| [i as f64, 3.0 - 2.0 * i as f64]).collect();
        let r = sample_correlation(&data, 50, 2).unwrap();
        assert!((r[(0, 1)] + 1.0).abs() < 1e-12);
    }
}
