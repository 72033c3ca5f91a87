//! Covariance estimators for 1-step base forecast errors.
//!
//! Three variants feed the reconciliation weights: the plain sample
//! covariance (divisor 1/T), a shrinkage estimator that pulls the
//! off-diagonal toward zero with a data-driven intensity, and the
//! diagonal of the sample covariance.

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower_with_tol;
use nalgebra::DMatrix;

/// Which estimator produced a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Sample,
    Shrinkage,
    Diagonal,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Sample => "sample",
            EstimatorKind::Shrinkage => "shrinkage",
            EstimatorKind::Diagonal => "diagonal",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An estimated error covariance matrix with provenance.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    w: DMatrix<f64>,
    kind: EstimatorKind,
    shrink_lambda: Option<f64>,
    n_rows_used: usize,
}

impl CovarianceEstimate {
    /// Wraps an explicitly provided covariance matrix.
    ///
    /// The matrix must be square and finite; it is symmetrized on entry.
    pub fn from_matrix(w: DMatrix<f64>, kind: EstimatorKind) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::NotSquare {
                context: "covariance matrix",
                rows: w.nrows(),
                cols: w.ncols(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        Ok(Self {
            w: crate::linalg::symmetrize(&w),
            kind,
            shrink_lambda: None,
            n_rows_used: 0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    /// Shrinkage intensity in [0, 1]; present only for the shrinkage kind.
    pub fn shrink_lambda(&self) -> Option<f64> {
        self.shrink_lambda
    }

    pub fn n_rows_used(&self) -> usize {
        self.n_rows_used
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }
}

fn validate_residuals(residuals: &DMatrix<f64>, min_rows: usize) -> Result<()> {
    let t = residuals.nrows();
    if t < min_rows {
        return Err(Error::SeriesTooShort {
            min: min_rows,
            actual: t,
        });
    }
    if residuals.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("residual matrix"));
    }
    Ok(())
}

fn demean_columns(residuals: &DMatrix<f64>) -> DMatrix<f64> {
    let t = residuals.nrows();
    let mut centered = residuals.clone();
    for mut col in centered.column_iter_mut() {
        let mu = col.sum() / t as f64;
        col.add_scalar_mut(-mu);
    }
    centered
}

/// Sample covariance (1/T) E'E of the column-demeaned residual matrix.
pub fn sample_cov(residuals: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    validate_residuals(residuals, 2)?;
    let t = residuals.nrows();
    let centered = demean_columns(residuals);
    let w = centered.transpose() * &centered / t as f64;
    Ok(CovarianceEstimate {
        w: crate::linalg::symmetrize(&w),
        kind: EstimatorKind::Sample,
        shrink_lambda: None,
        n_rows_used: t,
    })
}

/// Shrinkage covariance toward the diagonal target.
///
/// The intensity is estimated on the sample correlations:
/// `lambda = sum_{i!=j} Var(r_ij) / sum_{i!=j} r_ij^2`, clipped to [0, 1],
/// with `Var(r_ij)` the unbiased variance of the mean of the T
/// per-observation products of standardized residuals. The diagonal of the
/// sample covariance is preserved exactly; off-diagonals scale by
/// (1 - lambda).
pub fn shrink_cov(residuals: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    validate_residuals(residuals, 3)?;
    let t = residuals.nrows();
    let m = residuals.ncols();
    let sample = sample_cov(residuals)?;
    let w_sam = sample.matrix();

    for j in 0..m {
        if w_sam[(j, j)] <= 0.0 {
            return Err(Error::ZeroVarianceColumn(j));
        }
    }

    let lambda = if m < 2 {
        0.0
    } else {
        // Standardize: x_tj = (e_tj - mean_j) / sd_j with the 1/T variance,
        // so that mean_t(x_ti * x_tj) is exactly the sample correlation.
        let centered = demean_columns(residuals);
        let sd: Vec<f64> = (0..m).map(|j| w_sam[(j, j)].sqrt()).collect();
        let mut num = 0.0;
        let mut den = 0.0;
        let tf = t as f64;
        for i in 0..m {
            for j in (i + 1)..m {
                let mut sum_w = 0.0;
                let mut sum_w2 = 0.0;
                for row in 0..t {
                    let w = centered[(row, i)] / sd[i] * (centered[(row, j)] / sd[j]);
                    sum_w += w;
                    sum_w2 += w * w;
                }
                let r = sum_w / tf;
                // Unbiased variance of the mean of the products.
                let var_r = (sum_w2 - tf * r * r) / (tf * (tf - 1.0));
                num += var_r;
                den += r * r;
            }
        }
        if den > 0.0 {
            (num / den).clamp(0.0, 1.0)
        } else {
            1.0
        }
    };

    let mut w = w_sam.clone();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                w[(i, j)] *= 1.0 - lambda;
            }
        }
    }
    Ok(CovarianceEstimate {
        w,
        kind: EstimatorKind::Shrinkage,
        shrink_lambda: Some(lambda),
        n_rows_used: t,
    })
}

/// Diagonal of an existing estimate; off-diagonals zeroed.
pub fn diag_cov(estimate: &CovarianceEstimate) -> CovarianceEstimate {
    let m = estimate.dim();
    let mut w = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        w[(j, j)] = estimate.matrix()[(j, j)];
    }
    CovarianceEstimate {
        w,
        kind: EstimatorKind::Diagonal,
        shrink_lambda: None,
        n_rows_used: estimate.n_rows_used,
    }
}

/// True iff a Cholesky factorization succeeds with every pivot above `tol`.
pub fn is_positive_definite(w: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if w.nrows() != w.ncols() {
        return Err(Error::NotSquare {
            context: "positive-definiteness check",
            rows: w.nrows(),
            cols: w.ncols(),
        });
    }
    Ok(cholesky_lower_with_tol(w, tol).is_some())
}
