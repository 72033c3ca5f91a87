//! Command-line harness over the library: simulation studies, rolling
//! evaluation, one-shot reconciliation and synthetic-panel generation.

use clap::{Args, Parser, Subcommand};
use hts_recon::covariance::EstimatorKind;
use hts_recon::error::{Error, Result};
use hts_recon::eval::{
    load_panel, multivariate_table_with_fallback, report, rolling_evaluate, EvalOptions,
    WindowMode,
};
use hts_recon::hierarchy::{build_summing_matrix, coherence_discrepancy, HierarchySpec};
use hts_recon::models::{Differencing, FitOptions};
use hts_recon::reconcile::{g_matrix, reconcile_gaussian};
use hts_recon::report::{
    align_columns, read_labeled_matrix_csv, write_failures_csv, write_labeled_matrix_csv,
    write_metadata, write_records_csv,
};
use hts_recon::simulation::{
    method_grid, run_replications, CorrelationMode, ScoreName, ScoredMethod, Setup1Config,
    Setup2Config, SimDesign, SimOptions,
};
use hts_recon::synthetic::synthetic_tourism_panel;
use nalgebra::DVector;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hts-recon",
    version,
    about = "Probabilistic forecast reconciliation for hierarchical time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconcile a base forecast vector with one method and write the
    /// coherent mean and bottom-level covariance.
    Reconcile(ReconcileArgs),
    /// Run the small-hierarchy correlation-sweep simulation design.
    Sim1(Sim1Args),
    /// Run the 43-series block-correlation simulation design.
    Sim2(Sim2Args),
    /// Rolling-window evaluation of a bottom-level panel CSV.
    Evaluate(EvaluateArgs),
    /// Generate the bundled synthetic tourism-shaped panel.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ReconcileArgs {
    /// Reconciliation method: bu | ols | wls | mint.
    #[arg(long)]
    method: String,
    /// Hierarchy spec file (line 1 prefix lengths, then bottom labels).
    #[arg(long)]
    hierarchy: PathBuf,
    /// CSV with one row of base forecasts, columns keyed by series label.
    #[arg(long)]
    forecast: PathBuf,
    /// CSV of in-sample 1-step residuals, columns keyed by series label.
    #[arg(long)]
    residuals: PathBuf,
    /// Covariance estimator: sample | shrink.
    #[arg(long, default_value = "shrink")]
    cov: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Sim1Args {
    /// Bottom-level innovation correlation parameter in (-1, 1).
    #[arg(long, allow_negative_numbers = true)]
    rho: f64,
    /// Series length; the last observation is the test point.
    #[arg(long = "T", default_value_t = 501)]
    t_len: usize,
    /// Number of replications.
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Covariance estimators: sample | shrink | both.
    #[arg(long, default_value = "both")]
    cov: String,
    #[arg(long, default_value_t = 3)]
    max_p: usize,
    #[arg(long, default_value_t = 3)]
    max_q: usize,
    /// Monte Carlo draws for the sample-based scores.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Sim2Args {
    /// Correlation scenario: nonneg | mixed.
    #[arg(long)]
    corr: String,
    #[arg(long = "T", default_value_t = 501)]
    t_len: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "both")]
    cov: String,
    #[arg(long, default_value_t = 3)]
    max_p: usize,
    #[arg(long, default_value_t = 3)]
    max_q: usize,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Bottom-level panel CSV (first column dates, then series by label).
    #[arg(long)]
    data: PathBuf,
    /// Hierarchy spec file.
    #[arg(long)]
    hierarchy: PathBuf,
    /// Training window length.
    #[arg(long, default_value_t = 120)]
    window: usize,
    /// Forecast horizon.
    #[arg(long = "h", default_value_t = 1)]
    horizon: usize,
    /// Comma-separated methods from bu, ols, wls, mint, base.
    #[arg(long, default_value = "bu,ols,wls,mint,base")]
    methods: String,
    /// Covariance estimators: sample | shrink | both.
    #[arg(long, default_value = "shrink")]
    cov: String,
    /// sliding (fixed length) or expanding.
    #[arg(long, default_value = "sliding")]
    window_mode: String,
    /// Preprocessing differencing: none | first | seasonal:<lag>.
    #[arg(long, default_value = "none")]
    difference: String,
    #[arg(long, default_value_t = 3)]
    max_p: usize,
    #[arg(long, default_value_t = 3)]
    max_q: usize,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit successfully even if some windows failed.
    #[arg(long, default_value_t = false)]
    allow_partial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for panel.csv and hierarchy.txt.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 264)]
    months: usize,
}

fn parse_kinds(text: &str) -> Result<Vec<EstimatorKind>> {
    match text {
        "sample" => Ok(vec![EstimatorKind::Sample]),
        "shrink" | "shrinkage" => Ok(vec![EstimatorKind::Shrinkage]),
        "both" => Ok(vec![EstimatorKind::Sample, EstimatorKind::Shrinkage]),
        other => Err(Error::InvalidParameter(format!(
            "unknown covariance choice `{other}` (expected sample|shrink|both)"
        ))),
    }
}

fn run_reconcile(args: &ReconcileArgs) -> Result<()> {
    let spec = HierarchySpec::from_file(&args.hierarchy)?;
    let s = build_summing_matrix(&spec)?;
    let method = match ScoredMethod::parse(&args.method)? {
        ScoredMethod::Reconciled(kind) => kind,
        ScoredMethod::Base => {
            return Err(Error::InvalidParameter(
                "`base` is not a reconciliation method; pick bu|ols|wls|mint".into(),
            ))
        }
    };

    let (fc_labels, fc) = read_labeled_matrix_csv(&args.forecast)?;
    if fc.nrows() != 1 {
        return Err(Error::InvalidParameter(format!(
            "forecast CSV must contain exactly one data row, got {}",
            fc.nrows()
        )));
    }
    let want: Vec<String> = s.row_labels().to_vec();
    let y_hat: DVector<f64> = align_columns(&fc_labels, &fc, &want)?.row(0).transpose();

    let (res_labels, res_raw) = read_labeled_matrix_csv(&args.residuals)?;
    let residuals = align_columns(&res_labels, &res_raw, &want)?;

    let kinds = parse_kinds(&args.cov)?;
    let kind = kinds[0];
    let est = match kind {
        EstimatorKind::Sample => hts_recon::covariance::sample_cov(&residuals)?,
        EstimatorKind::Shrinkage => hts_recon::covariance::shrink_cov(&residuals)?,
        EstimatorKind::Diagonal => {
            hts_recon::covariance::diag_cov(&hts_recon::covariance::sample_cov(&residuals)?)
        }
    };

    let g = g_matrix(method, &s, Some(&est))?;
    let reconciled = reconcile_gaussian(&g, &s, &y_hat, est.matrix())?;
    let coherence = coherence_discrepancy(&s, reconciled.full_mean())?;

    std::fs::create_dir_all(&args.out)?;
    let mean_mat =
        nalgebra::DMatrix::from_fn(1, s.m(), |_, j| reconciled.full_mean()[j]);
    write_labeled_matrix_csv(&want, &mean_mat, args.out.join("reconciled_mean.csv"))?;
    let bottom_labels: Vec<String> = s.bottom_labels().to_vec();
    write_labeled_matrix_csv(
        &bottom_labels,
        reconciled.bottom_cov(),
        args.out.join("bottom_cov.csv"),
    )?;
    let mut meta = vec![
        ("method".to_string(), method.to_string()),
        ("covariance".to_string(), kind.as_str().to_string()),
        ("coherence_discrepancy".to_string(), coherence.to_string()),
        (
            "h_step_covariance".to_string(),
            "1-step estimate used for all horizons".to_string(),
        ),
    ];
    if let Some(lambda) = est.shrink_lambda() {
        meta.push(("shrink_lambda".to_string(), lambda.to_string()));
    }
    write_metadata(&meta, args.out.join("metadata.txt"))?;
    println!(
        "reconciled {} series with {method}; coherence discrepancy {coherence:.3e}",
        s.m()
    );
    Ok(())
}

fn write_sim_outputs(
    out_dir: &PathBuf,
    output: &hts_recon::simulation::SimOutput,
    meta: Vec<(String, String)>,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_records_csv(&output.records, out_dir.join("records.csv"))?;
    if !output.failures.is_empty() {
        write_failures_csv(&output.failures, out_dir.join("failures.csv"))?;
    }
    let (baseline_kind, table) = multivariate_table_with_fallback(&output.records)?;
    std::fs::write(out_dir.join("table.csv"), table.to_csv_string())?;
    let mut meta = meta;
    meta.push(("baseline".to_string(), format!("BU,{baseline_kind}")));
    write_metadata(&meta, out_dir.join("metadata.txt"))?;
    println!(
        "wrote {} records ({} failures) to {}",
        output.records.len(),
        output.failures.len(),
        out_dir.display()
    );
    Ok(())
}

fn run_sim1(args: &Sim1Args) -> Result<()> {
    let cfg = Setup1Config::new(args.rho, args.t_len, args.reps, args.seed)?;
    if !cfg.is_on_grid() {
        eprintln!("note: rho {} is off the study grid {{0, ±0.1, ..., ±0.8}}", args.rho);
    }
    let kinds = parse_kinds(&args.cov)?;
    let methods = method_grid(&kinds);
    let opts = SimOptions {
        max_p: args.max_p,
        max_q: args.max_q,
        n_draws: args.draws,
    };
    let output = run_replications(
        &SimDesign::Setup1(cfg),
        &methods,
        &ScoreName::SIMULATION,
        &opts,
    );
    let meta = vec![
        ("design".into(), "setup1".into()),
        ("rho".into(), args.rho.to_string()),
        ("T".into(), args.t_len.to_string()),
        ("reps".into(), args.reps.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("cov".into(), args.cov.clone()),
        ("max_p".into(), args.max_p.to_string()),
        ("max_q".into(), args.max_q.to_string()),
        ("draws".into(), args.draws.to_string()),
        ("crps_estimator".into(), "gaussian closed form".into()),
        ("logscore_basis".into(), "bottom-level density".into()),
    ];
    write_sim_outputs(&args.out, &output, meta)
}

fn run_sim2(args: &Sim2Args) -> Result<()> {
    let mode = CorrelationMode::parse(&args.corr)?;
    let cfg = Setup2Config::new(mode, args.t_len, args.reps, args.seed)?;
    let kinds = parse_kinds(&args.cov)?;
    let methods = method_grid(&kinds);
    let opts = SimOptions {
        max_p: args.max_p,
        max_q: args.max_q,
        n_draws: args.draws,
    };
    let output = run_replications(
        &SimDesign::Setup2(cfg),
        &methods,
        &ScoreName::SIMULATION,
        &opts,
    );
    let meta = vec![
        ("design".into(), "setup2".into()),
        ("corr".into(), mode.as_str().into()),
        ("T".into(), args.t_len.to_string()),
        ("reps".into(), args.reps.to_string()),
        ("seed".into(), args.seed.to_string()),
        ("cov".into(), args.cov.clone()),
        ("max_p".into(), args.max_p.to_string()),
        ("max_q".into(), args.max_q.to_string()),
        ("draws".into(), args.draws.to_string()),
        ("crps_estimator".into(), "gaussian closed form".into()),
        ("logscore_basis".into(), "bottom-level density".into()),
    ];
    write_sim_outputs(&args.out, &output, meta)
}

fn run_evaluate(args: &EvaluateArgs) -> Result<bool> {
    let panel = load_panel(&args.data, &args.hierarchy)?;
    let kinds = parse_kinds(&args.cov)?;
    let mut methods = Vec::new();
    for token in args.methods.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let m = ScoredMethod::parse(token)?;
        for &k in &kinds {
            methods.push((m, k));
        }
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }
    let opts = EvalOptions {
        initial_window: args.window,
        h: args.horizon,
        methods,
        window_mode: WindowMode::parse(&args.window_mode)?,
        fit: FitOptions {
            max_p: args.max_p,
            max_q: args.max_q,
            difference: Differencing::parse(&args.difference)?,
        },
        n_draws: args.draws,
        seed: args.seed,
    };
    let output = rolling_evaluate(&panel, &opts)?;
    let s = build_summing_matrix(panel.spec())?;
    report(&output, &s, &args.out)?;
    println!(
        "evaluated {} windows over {} series; {} failures; reports in {}",
        output.n_windows,
        s.m(),
        output.failures.len(),
        args.out.display()
    );
    Ok(output.failures.is_empty())
}

fn run_synth(args: &SynthArgs) -> Result<()> {
    let panel = synthetic_tourism_panel(args.seed, args.months)?;
    std::fs::create_dir_all(&args.out)?;
    panel.write_csv(args.out.join("panel.csv"))?;
    std::fs::write(args.out.join("hierarchy.txt"), panel.spec().to_text())?;
    println!(
        "wrote {} months x {} regions to {}",
        args.months,
        panel.values().ncols(),
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    hts_recon::init_threads_from_env();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Reconcile(args) => run_reconcile(args).map(|()| true),
        Command::Sim1(args) => run_sim1(args).map(|()| true),
        Command::Sim2(args) => run_sim2(args).map(|()| true),
        Command::Evaluate(args) => run_evaluate(args).map(|ok| ok || args.allow_partial),
        Command::Synth(args) => run_synth(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some windows failed; rerun with --allow-partial to accept partial output");
            ExitCode::FAILURE
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
