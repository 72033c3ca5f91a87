//! Projection-based reconciliation of Gaussian predictive distributions.
//!
//! A reconciliation map is `y ~> S G y` with `G S = I_n`, so that `S G` is
//! a projection onto the column span of S. The four standard choices of G
//! are bottom-up, OLS, WLS and MinT. Propagating a Gaussian base density
//! N(y_hat, W) through the map gives the coherent density
//! N(S G y_hat, S G W G' S'), represented here by its bottom-level mean and
//! covariance. The module also exposes the J/U parameterization
//! `G = J + X U'` of the constraint set and the expected-log-score
//! objective that MinT minimizes over it.

use crate::covariance::{CovarianceEstimate, EstimatorKind};
use crate::error::{Error, Result};
use crate::hierarchy::SummingMatrix;
use crate::linalg::{cholesky, cholesky_lower_with_tol, logdet_pd, max_abs, symmetrize};
use nalgebra::{DMatrix, DVector};

/// Default tolerance for the projection identity checks.
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-8;

/// The projection family of reconciliation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    BottomUp,
    Ols,
    Wls,
    MinT,
}

impl MethodKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodKind::BottomUp => "BU",
            MethodKind::Ols => "OLS",
            MethodKind::Wls => "WLS",
            MethodKind::MinT => "MinT",
        }
    }

    /// Whether the G matrix itself depends on a covariance estimate.
    pub fn needs_covariance(&self) -> bool {
        matches!(self, MethodKind::Wls | MethodKind::MinT)
    }

    pub const ALL: [MethodKind; 4] = [
        MethodKind::BottomUp,
        MethodKind::Ols,
        MethodKind::Wls,
        MethodKind::MinT,
    ];
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A method paired with the covariance estimator it is applied with.
///
/// WLS uses the diagonal of the estimate, MinT the full matrix; BU and OLS
/// ignore it when forming G but still need it to propagate the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReconciliationMethod {
    pub kind: MethodKind,
    pub covariance_kind: EstimatorKind,
}

impl ReconciliationMethod {
    pub fn new(kind: MethodKind, covariance_kind: EstimatorKind) -> Self {
        Self {
            kind,
            covariance_kind,
        }
    }
}

/// Coherent Gaussian predictive distribution after reconciliation.
#[derive(Debug, Clone)]
pub struct ReconciledGaussian {
    s: SummingMatrix,
    bottom_mean: DVector<f64>,
    bottom_cov: DMatrix<f64>,
    full_mean: DVector<f64>,
}

impl ReconciledGaussian {
    pub fn summing_matrix(&self) -> &SummingMatrix {
        &self.s
    }

    /// G y_hat.
    pub fn bottom_mean(&self) -> &DVector<f64> {
        &self.bottom_mean
    }

    /// G W G'.
    pub fn bottom_cov(&self) -> &DMatrix<f64> {
        &self.bottom_cov
    }

    /// S G y_hat; coherent by construction.
    pub fn full_mean(&self) -> &DVector<f64> {
        &self.full_mean
    }
}

/// The constraint-encoding decomposition behind `G = J + X U'`.
///
/// With S' = [C' | I_n], the selector J = [0 | I_n] satisfies J S = I_n and
/// the columns of U (U' = [I_{m*} | -C]) span the null space of S', so any
/// G = J + X U' satisfies G S = I_n and conversely.
#[derive(Debug, Clone)]
pub struct JUDecomposition {
    j: DMatrix<f64>,
    u: DMatrix<f64>,
    c: DMatrix<f64>,
    m_star: usize,
}

impl JUDecomposition {
    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn m_star(&self) -> usize {
        self.m_star
    }

    /// The optimal G* in the closed form `J - J W U (U' W U)^-1 U'`.
    pub fn gstar(&self, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let wu = w * &self.u;
        let jwu = &self.j * &wu;
        let uwu = symmetrize(&(self.u.transpose() * &wu));
        let chol = cholesky(&uwu, "U'WU in the J/U closed form")?;
        // X* = -J W U (U'WU)^-1, so G* = J + X* U'.
        let xstar = -chol.solve(&jwu.transpose()).transpose();
        Ok(&self.j + xstar * self.u.transpose())
    }
}

/// Extracts J, U and C from a summing matrix in bottom-last convention.
pub fn ju_decompose(s: &SummingMatrix) -> Result<JUDecomposition> {
    let (m, n) = (s.m(), s.n());
    let m_star = m - n;
    // The convention requires the last n rows of S to be exactly I_n.
    let bottom = s.matrix().rows(m_star, n);
    if (bottom - DMatrix::<f64>::identity(n, n)).amax() > 0.0 {
        return Err(Error::MissingIdentityBlock);
    }
    let c = s.aggregate_block();
    let mut j = DMatrix::<f64>::zeros(n, m);
    for i in 0..n {
        j[(i, m_star + i)] = 1.0;
    }
    let mut u = DMatrix::<f64>::zeros(m, m_star);
    for i in 0..m_star {
        u[(i, i)] = 1.0;
    }
    let neg_ct = -c.transpose();
    u.rows_mut(m_star, n).copy_from(&neg_ct);
    Ok(JUDecomposition { j, u, c, m_star })
}

/// The MinT matrix `(S' W^-1 S)^-1 S' W^-1`, computed via Cholesky solves.
pub fn mint_gstar(s: &SummingMatrix, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != s.m() || w.ncols() != s.m() {
        return Err(Error::DimensionMismatch {
            context: "covariance for MinT",
            expected: s.m(),
            actual: w.nrows(),
        });
    }
    let chol_w = cholesky(w, "W in MinT")?;
    let winv_s = chol_w.solve(s.matrix());
    let a = symmetrize(&(s.matrix().transpose() * &winv_s));
    let chol_a = cholesky(&a, "S'W^-1 S in MinT")?;
    Ok(chol_a.solve(&winv_s.transpose()))
}

/// The G matrix of a reconciliation method.
///
/// BU needs no covariance; OLS ignores it; WLS uses its diagonal; MinT the
/// full matrix. WLS and MinT error if `w` is absent or singular.
pub fn g_matrix(
    method: MethodKind,
    s: &SummingMatrix,
    w: Option<&CovarianceEstimate>,
) -> Result<DMatrix<f64>> {
    let (m, n) = (s.m(), s.n());
    match method {
        MethodKind::BottomUp => {
            let mut g = DMatrix::<f64>::zeros(n, m);
            for i in 0..n {
                g[(i, m - n + i)] = 1.0;
            }
            Ok(g)
        }
        MethodKind::Ols => {
            let sts = symmetrize(&(s.matrix().transpose() * s.matrix()));
            let chol = cholesky(&sts, "S'S in OLS")?;
            Ok(chol.solve(&s.matrix().transpose()))
        }
        MethodKind::Wls => {
            let est = w.ok_or(Error::MissingCovariance("WLS"))?;
            check_cov_dim(est, m)?;
            let mut lambda_inv_s = s.matrix().clone();
            for i in 0..m {
                let lam = est.matrix()[(i, i)];
                if lam <= 0.0 {
                    return Err(Error::CholeskyFailure("diagonal weights in WLS"));
                }
                for j in 0..n {
                    lambda_inv_s[(i, j)] /= lam;
                }
            }
            let a = symmetrize(&(s.matrix().transpose() * &lambda_inv_s));
            let chol = cholesky(&a, "S'L^-1 S in WLS")?;
            Ok(chol.solve(&lambda_inv_s.transpose()))
        }
        MethodKind::MinT => {
            let est = w.ok_or(Error::MissingCovariance("MinT"))?;
            check_cov_dim(est, m)?;
            mint_gstar(s, est.matrix())
        }
    }
}

fn check_cov_dim(est: &CovarianceEstimate, m: usize) -> Result<()> {
    if est.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "covariance estimate",
            expected: m,
            actual: est.dim(),
        });
    }
    Ok(())
}

/// Checks `G S = I_n` and `S G S = S` to the given tolerance.
pub fn check_projection(s: &SummingMatrix, g: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if g.nrows() != s.n() || g.ncols() != s.m() {
        return Err(Error::DimensionMismatch {
            context: "G matrix",
            expected: s.n() * s.m(),
            actual: g.nrows() * g.ncols(),
        });
    }
    let gs = g * s.matrix();
    let dev1 = max_abs(&(&gs - DMatrix::<f64>::identity(s.n(), s.n())));
    let dev2 = max_abs(&(s.matrix() * &gs - s.matrix()));
    Ok(dev1 < tol && dev2 < tol)
}

/// The expected logarithmic score of the reconciled density as a function
/// of G: `K + n/2 + log det(G W G')/2` with
/// `K = (n/2) log(2 pi) + log det(S'S)/2`.
pub fn expected_logscore_objective(
    g: &DMatrix<f64>,
    w: &DMatrix<f64>,
    s: &SummingMatrix,
) -> Result<f64> {
    if !check_projection(s, g, DEFAULT_PROJECTION_TOL)? {
        let gs = g * s.matrix();
        let dev = max_abs(&(&gs - DMatrix::<f64>::identity(s.n(), s.n())));
        return Err(Error::NotAProjection { max_dev: dev });
    }
    let n = s.n() as f64;
    let sts = symmetrize(&(s.matrix().transpose() * s.matrix()));
    let k = 0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * logdet_pd(&sts, "S'S")?;
    let gwg = symmetrize(&(g * w * g.transpose()));
    Ok(k + 0.5 * n + 0.5 * logdet_pd(&gwg, "G W G'")?)
}

/// Tolerance for positive-definiteness of a propagated covariance:
/// smallest Cholesky pivot must exceed `1e-12 * trace(W) / m`.
fn pd_pivot_tol(w: &DMatrix<f64>) -> f64 {
    1e-12 * w.trace() / w.nrows() as f64
}

/// Propagates the Gaussian base density N(y_hat, W) through G.
///
/// Verifies the projection identity and positive definiteness of the
/// reconciled bottom covariance G W G'.
pub fn reconcile_gaussian(
    g: &DMatrix<f64>,
    s: &SummingMatrix,
    y_hat: &DVector<f64>,
    w: &DMatrix<f64>,
) -> Result<ReconciledGaussian> {
    if y_hat.len() != s.m() {
        return Err(Error::DimensionMismatch {
            context: "base forecast vector",
            expected: s.m(),
            actual: y_hat.len(),
        });
    }
    if !check_projection(s, g, DEFAULT_PROJECTION_TOL)? {
        let gs = g * s.matrix();
        let dev = max_abs(&(&gs - DMatrix::<f64>::identity(s.n(), s.n())));
        return Err(Error::NotAProjection { max_dev: dev });
    }
    let bottom_mean = g * y_hat;
    let bottom_cov = symmetrize(&(g * w * g.transpose()));
    if cholesky_lower_with_tol(&bottom_cov, pd_pivot_tol(w)).is_none() {
        return Err(Error::CholeskyFailure("reconciled bottom covariance"));
    }
    let full_mean = s.matrix() * &bottom_mean;
    Ok(ReconciledGaussian {
        s: s.clone(),
        bottom_mean,
        bottom_cov,
        full_mean,
    })
}

/// Marginal predictive variances of all m series: entry i is
/// `S_i' (G W G') S_i` for row i of S.
pub fn marginal_variances(r: &ReconciledGaussian) -> DVector<f64> {
    let s = r.s.matrix();
    let sc = s * &r.bottom_cov;
    DVector::from_fn(s.nrows(), |i, _| sc.row(i).dot(&s.row(i)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_summing_matrix, HierarchySpec};
    use crate::rng::derive_rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn two_level() -> SummingMatrix {
        let spec = HierarchySpec::new(
            ["AA", "AB", "AC", "BA", "BB"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec![0, 1],
        )
        .unwrap();
        build_summing_matrix(&spec).unwrap()
    }

    fn random_pd(m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = derive_rng(seed, &[99]);
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        symmetrize(&(&a * a.transpose())) / m as f64 + DMatrix::identity(m, m) * 0.2
    }

    fn cov_estimate(w: DMatrix<f64>) -> CovarianceEstimate {
        CovarianceEstimate::from_matrix(w, crate::covariance::EstimatorKind::Sample).unwrap()
    }

    #[test]
    fn bu_selects_bottom_entries() {
        let s = two_level();
        let g = g_matrix(MethodKind::BottomUp, &s, None).unwrap();
        let y = DVector::from_row_slice(&[15.0, 6.0, 9.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = &g * &y;
        assert_eq!(b.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(check_projection(&s, &g, 1e-12).unwrap());
    }

    #[test]
    fn ols_satisfies_projection() {
        let s = two_level();
        let g = g_matrix(MethodKind::Ols, &s, None).unwrap();
        let gs = &g * s.matrix();
        assert!(max_abs(&(&gs - DMatrix::<f64>::identity(5, 5))) < 1e-12);
    }

    #[test]
    fn mint_with_identity_covariance_is_ols() {
        let s = two_level();
        let g_ols = g_matrix(MethodKind::Ols, &s, None).unwrap();
        let g_mint = mint_gstar(&s, &DMatrix::identity(8, 8)).unwrap();
        assert!(max_abs(&(&g_ols - &g_mint)) < 1e-12);
    }

    #[test]
    fn mint_with_diagonal_covariance_is_wls() {
        let s = two_level();
        let mut w = DMatrix::<f64>::zeros(8, 8);
        let mut rng = derive_rng(5, &[]);
        for i in 0..8 {
            w[(i, i)] = 0.5 + rng.random::<f64>();
        }
        let est = cov_estimate(w.clone());
        let g_wls = g_matrix(MethodKind::Wls, &s, Some(&est)).unwrap();
        let g_mint = mint_gstar(&s, &w).unwrap();
        assert!(max_abs(&(&g_wls - &g_mint)) < 1e-10);
    }

    #[test]
    fn projection_check_rejects_zero() {
        let s = two_level();
        let g = DMatrix::<f64>::zeros(5, 8);
        assert!(!check_projection(&s, &g, 1e-10).unwrap());
    }

    #[test]
    fn all_methods_project_on_random_covariance() {
        let s = two_level();
        let est = cov_estimate(random_pd(8, 7));
        for kind in MethodKind::ALL {
            let g = g_matrix(kind, &s, Some(&est)).unwrap();
            assert!(
                check_projection(&s, &g, 1e-10).unwrap(),
                "{kind} failed projection"
            );
        }
    }

    #[test]
    fn ju_decomposition_invariants() {
        let s = two_level();
        let ju = ju_decompose(&s).unwrap();
        assert_eq!(ju.m_star(), 3);
        assert_eq!(ju.c(), &s.matrix().rows(0, 3).into_owned());
        let js = ju.j() * s.matrix();
        assert!(max_abs(&(&js - DMatrix::<f64>::identity(5, 5))) == 0.0);
        let uts = ju.u().transpose() * s.matrix();
        assert!(max_abs(&uts) == 0.0);
    }

    #[test]
    fn gstar_closed_forms_agree() {
        let s = two_level();
        for seed in 0..10 {
            let w = random_pd(8, 100 + seed);
            let direct = mint_gstar(&s, &w).unwrap();
            let via_ju = ju_decompose(&s).unwrap().gstar(&w).unwrap();
            assert!(
                max_abs(&(&direct - &via_ju)) < 1e-10,
                "closed forms disagree at seed {seed}"
            );
        }
    }

    #[test]
    fn objective_minimized_at_gstar() {
        let s = two_level();
        let w = random_pd(8, 42);
        let gstar = mint_gstar(&s, &w).unwrap();
        let ju = ju_decompose(&s).unwrap();
        let base = expected_logscore_objective(&gstar, &w, &s).unwrap();
        let g_ols = g_matrix(MethodKind::Ols, &s, None).unwrap();
        assert!(expected_logscore_objective(&g_ols, &w, &s).unwrap() >= base);
        let mut rng = derive_rng(77, &[]);
        for _ in 0..50 {
            let x = DMatrix::from_fn(5, 3, |_, _| {
                0.3 * rng.sample::<f64, _>(StandardNormal)
            });
            let g = &gstar + &x * ju.u().transpose();
            let obj = expected_logscore_objective(&g, &w, &s).unwrap();
            assert!(obj > base + 1e-9, "perturbed objective not larger");
        }
    }

    #[test]
    fn objective_with_identity_structure_is_constant() {
        let spec = HierarchySpec::new(vec!["A".into(), "B".into()], vec![]).unwrap();
        let s = build_summing_matrix(&spec).unwrap();
        assert_eq!(s.m(), s.n());
        let w = random_pd(2, 3);
        let g = DMatrix::<f64>::identity(2, 2);
        let obj = expected_logscore_objective(&g, &w, &s).unwrap();
        let expected = (2.0 * std::f64::consts::PI).ln() + 1.0
            + 0.5 * logdet_pd(&w, "w").unwrap();
        assert_relative_eq!(obj, expected, epsilon = 1e-12);
    }

    #[test]
    fn objective_requires_projection() {
        let s = two_level();
        let w = random_pd(8, 4);
        let g = DMatrix::<f64>::zeros(5, 8);
        assert!(matches!(
            expected_logscore_objective(&g, &w, &s),
            Err(Error::NotAProjection { .. })
        ));
    }

    #[test]
    fn reconcile_fixes_coherent_points() {
        let s = two_level();
        let w = random_pd(8, 11);
        let b = DVector::from_row_slice(&[1.0, -2.0, 0.5, 3.0, 1.5]);
        let y = s.matrix() * &b;
        for kind in MethodKind::ALL {
            let est = cov_estimate(w.clone());
            let g = g_matrix(kind, &s, Some(&est)).unwrap();
            let r = reconcile_gaussian(&g, &s, &y, &w).unwrap();
            assert!(
                (r.full_mean() - &y).amax() < 1e-10,
                "{kind} moved a coherent point"
            );
        }
    }

    #[test]
    fn bu_bottom_cov_is_bottom_block() {
        let s = two_level();
        let w = random_pd(8, 15);
        let g = g_matrix(MethodKind::BottomUp, &s, None).unwrap();
        let y = DVector::zeros(8);
        let r = reconcile_gaussian(&g, &s, &y, &w).unwrap();
        let block = w.view((3, 3), (5, 5)).into_owned();
        assert!((r.bottom_cov() - &block).amax() < 1e-14);
    }

    #[test]
    fn reconciling_twice_is_identity() {
        let s = two_level();
        let w = random_pd(8, 23);
        let mut rng = derive_rng(29, &[]);
        let y = DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = mint_gstar(&s, &w).unwrap();
        let once = reconcile_gaussian(&g, &s, &y, &w).unwrap();
        let twice = reconcile_gaussian(&g, &s, once.full_mean(), &w).unwrap();
        assert!((once.full_mean() - twice.full_mean()).amax() < 1e-10);
    }

    #[test]
    fn marginal_variance_structure() {
        let s = two_level();
        let w = random_pd(8, 31);
        let g = mint_gstar(&s, &w).unwrap();
        let y = DVector::zeros(8);
        let r = reconcile_gaussian(&g, &s, &y, &w).unwrap();
        let mv = marginal_variances(&r);
        for i in 0..5 {
            assert_relative_eq!(mv[3 + i], r.bottom_cov()[(i, i)], epsilon = 1e-12);
        }
        let ones = DVector::from_element(5, 1.0);
        assert_relative_eq!(mv[0], (ones.transpose() * r.bottom_cov() * &ones)[0], epsilon = 1e-10);
    }

    #[test]
    fn mint_variances_never_exceed_ols() {
        let s = two_level();
        for seed in 0..20 {
            let w = random_pd(8, 200 + seed);
            let y = DVector::zeros(8);
            let g_ols = g_matrix(MethodKind::Ols, &s, None).unwrap();
            let g_mint = mint_gstar(&s, &w).unwrap();
            let r_ols = reconcile_gaussian(&g_ols, &s, &y, &w).unwrap();
            let r_mint = reconcile_gaussian(&g_mint, &s, &y, &w).unwrap();
            let v_ols = marginal_variances(&r_ols);
            let v_mint = marginal_variances(&r_mint);
            for i in 0..8 {
                assert!(
                    v_mint[i] <= v_ols[i] + 1e-10,
                    "series {i} MinT variance above OLS at seed {seed}"
                );
            }
            assert!(r_mint.bottom_cov().trace() <= r_ols.bottom_cov().trace() + 1e-10);
        }
    }

    #[test]
    fn wls_requires_covariance() {
        let s = two_level();
        assert!(matches!(
            g_matrix(MethodKind::Wls, &s, None),
            Err(Error::MissingCovariance("WLS"))
        ));
    }
}
