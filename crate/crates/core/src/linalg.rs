//! Small shared linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance used when deciding whether a symmetric matrix is
/// positive semidefinite: eigenvalues above `-PSD_TOL * scale` count as
/// nonnegative, where `scale` is one plus the largest absolute entry.
pub const PSD_TOL: f64 = 1e-10;

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    debug_assert!(m.is_square());
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = m.clone().symmetric_eigen();
    sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Whether a symmetric matrix is positive semidefinite up to `PSD_TOL`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = 1.0 + m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    min_eigenvalue(m) >= -PSD_TOL * scale
}

/// Maximum absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Spectral norm of a general matrix, via the symmetric eigenproblem of
/// `mᵀm`. Adequate for the small parameter matrices used here.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    min_eigenvalue(&(-gram)).abs().max(0.0).sqrt()
}

/// Row-major flattening of a `d x d` matrix into a length-`d²` vector.
///
/// For symmetric `x`, `y` the Euclidean inner product of the flattenings
/// equals `tr(x y)`, so cone-valued state can be carried through the vector
/// solvers without bookkeeping.
pub fn flatten(m: &DMatrix<f64>) -> DVector<f64> {
    let d = m.nrows();
    debug_assert_eq!(d, m.ncols());
    DVector::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &[f64], d: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), d * d);
    DMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

/// Cholesky-like factor of a symmetric positive semidefinite matrix.
///
/// Falls back to an eigenvalue decomposition with negative eigenvalues
/// clipped to zero, so mild indefiniteness from rounding does not abort a
/// simulation step.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals)
}
