//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{what} is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Numerical rank with cutoff `max_dim * ||M|| * 1e-12`. Returns `(rank, cutoff)`.
pub fn numerical_rank(m: &Matrix) -> (usize, f64) {
    if m.is_empty() {
        return (0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let norm = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = m.nrows().max(m.ncols()) as f64 * norm * 1e-12;
    let rank = sv.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    (rank, cutoff)
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(m: &Matrix) -> Matrix {
    m.clone().exp()
}

/// Exact zero-order-hold discretization of `(A, B)` at period `ts`.
///
/// Uses the block-exponential identity
/// `exp([[A, B], [0, 0]] ts) = [[Ad, Bd], [0, I]]`.
pub fn zoh(a: &Matrix, b: &Matrix, ts: f64) -> (Matrix, Matrix) {
    let n = a.nrows();
    let p = b.ncols();
    let mut block = Matrix::zeros(n + p, n + p);
    block.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    block.view_mut((0, n), (n, p)).copy_from(&(b * ts));
    let e = expm(&block);
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, p)).into_owned(),
    )
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
