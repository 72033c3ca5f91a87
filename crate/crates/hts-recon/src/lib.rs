//! Probabilistic forecast reconciliation for hierarchical time series
//! under a Gaussian framework.
//!
//! The library builds summing matrices from hierarchy specs, fits ARMA
//! base models, estimates base-error covariances (sample / shrinkage /
//! diagonal), constructs projection reconciliation matrices (bottom-up,
//! OLS, WLS, MinT), propagates Gaussian predictive densities through
//! them, and evaluates the results with proper scoring rules. Simulation
//! designs and a rolling-window evaluation pipeline sit on top.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release -p hts-recon --example hierarchy_basics
//! cargo run --release -p hts-recon --example gaussian_reconciliation
//! cargo run --release -p hts-recon --example simulation_study
//! ```

pub mod covariance;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod linalg;
pub mod models;
pub mod reconcile;
pub mod report;
pub mod rng;
pub mod scoring;
pub mod simulation;
pub mod stats;
pub mod synthetic;

pub use covariance::{diag_cov, is_positive_definite, sample_cov, shrink_cov, CovarianceEstimate, EstimatorKind};
pub use error::{Error, Result};
pub use hierarchy::{
    aggregate, build_summing_matrix, coherence_discrepancy, HierarchySpec, SummingMatrix,
};
pub use models::{
    base_forecast_all, fit_arma, forecast, insample_residuals, ArmaModel, BaseForecastSet,
    Differencing, FitOptions,
};
pub use reconcile::{
    check_projection, expected_logscore_objective, g_matrix, ju_decompose, marginal_variances,
    mint_gstar, reconcile_gaussian, JUDecomposition, MethodKind, ReconciledGaussian,
    ReconciliationMethod,
};
pub use eval::{
    load_panel, mse_table, report, rolling_evaluate, EvalOptions, EvalOutput, MseTable, PanelData,
    WindowMode, WindowResult,
};
pub use scoring::{
    crps_empirical, crps_gaussian, energy_score, interval_score, logscore,
    logscore_full_structure, sample_gaussian, uniform_weights, variogram_score, GaussianDensity,
    SampleSet,
};
pub use simulation::{
    dgp_setup1, dgp_setup2, method_grid, relative_improvement, run_replications, CorrelationMode,
    RelTable, RepFailure, ScoreName, ScoreRecord, ScoredMethod, Setup1Config, Setup2Config,
    SimDesign, SimOptions, SimOutput,
};
pub use synthetic::{synthetic_tourism_panel, tourism_spec};

/// Initializes the global thread pool from the `RECON_THREADS` environment
/// variable. A no-op if the pool is already built or the variable is
/// absent or malformed.
pub fn init_threads_from_env() {
    if let Ok(raw) = std::env::var("RECON_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}
