//! A small correlation-sweep simulation study: simulate hierarchical
//! panels, reconcile Gaussian base forecasts with every method and
//! print the relative-improvement table against bottom-up.
//!
//! Run with: cargo run --release -p hts-recon --example simulation_study

use hts_recon::covariance::EstimatorKind;
use hts_recon::{
    method_grid, relative_improvement, run_replications, ScoreName, Setup1Config, SimDesign,
    SimOptions,
};

fn main() -> hts_recon::Result<()> {
    hts_recon::init_threads_from_env();
    let cfg = Setup1Config::new(0.5, 101, 50, 2024)?;
    let design = SimDesign::Setup1(cfg);
    let methods = method_grid(&[EstimatorKind::Sample, EstimatorKind::Shrinkage]);
    let opts = SimOptions {
        n_draws: 5_000,
        ..SimOptions::default()
    };

    println!("running {} replications (T = {}, rho = {}) ...", cfg.reps, cfg.t_len, cfg.rho);
    let output = run_replications(&design, &methods, &ScoreName::SIMULATION, &opts);
    println!(
        "{} records, {} failures",
        output.records.len(),
        output.failures.len()
    );

    let table = relative_improvement(&output.records, "BU", "sample")?;
    println!("\npercentage relative improvement vs bottom-up (sample), negative = better:");
    print!("{}", table.to_csv_string());

    let mint = table.get("MinT", "shrinkage", ScoreName::Ls).and_then(|c| c.value);
    println!("\nMinT(shrinkage) LS improvement: {:?}", mint);
    Ok(())
}
