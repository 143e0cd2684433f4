//! Small dense-matrix helpers: rank-revealing orthonormalization and
//! projector algebra used by the distribution operations.

use nalgebra::{DMatrix, DVector};

/// Relative rank tolerance for frame orthonormalization, measured against the
/// largest column norm of the input frame.
pub const RANK_TOL: f64 = 1e-8;

/// Orthonormalizes the columns of `frame` by SVD.
///
/// Returns the orthonormal basis (n x r) of the column span together with the
/// numerical rank `r`. Singular values below `RANK_TOL` times the largest
/// column norm are treated as zero.
pub fn orthonormalize(frame: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let max_col_norm = (0..frame.ncols())
        .map(|j| frame.column(j).norm())
        .fold(0.0f64, f64::max);
    if max_col_norm == 0.0 {
        return (DMatrix::zeros(frame.nrows(), 0), 0);
    }
    let svd = frame.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd requested u");
    let tol = RANK_TOL * max_col_norm;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    (u.columns(0, rank).into_owned(), rank)
}

/// Orthogonal projector `Q Q^T` onto the span of an orthonormal basis.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

/// Operator (spectral) norm of a matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values[0]
}

/// Least-squares projection of `v` onto the span of an orthonormal basis.
pub fn project_onto_basis(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    basis * (basis.transpose() * v)
}
