//! Small dense linear-algebra helpers shared across modules.
//!
//! Everything here wraps `nalgebra` on `DMatrix<f64>` at desk scale.
//! Inverses of covariance matrices are never formed explicitly; all
//! applications of `W^-1` go through Cholesky solves.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Lower Cholesky factor computed with an explicit pivot tolerance.
///
/// Returns `None` if any pivot (the value under the square root) is not
/// strictly greater than `pivot_tol`. This gives control over the
/// positive-definiteness threshold that `nalgebra::Cholesky` does not expose.
pub fn cholesky_lower_with_tol(a: &DMatrix<f64>, pivot_tol: f64) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !d.is_finite() || d <= pivot_tol {
            return None;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

/// Cholesky factorization, erroring with the given context on failure.
pub fn cholesky(a: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or(Error::CholeskyFailure(context))
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
pub fn logdet_pd(a: &DMatrix<f64>, context: &'static str) -> Result<f64> {
    let chol = cholesky(a, context)?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric part (A + A')/2; guards against round-off drift in products
/// like G W G'.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Spectral radius of a square real matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Quadratic form x' A^-1 x via an existing Cholesky factor of A.
pub fn mahalanobis_sq(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    // Solve L z = x, then ||z||^2.
    let z = chol.l_dirty().solve_lower_triangular(x).expect("factor is nonsingular");
    z.norm_squared()
}
