//! Rolling-window evaluation over a synthetic tourism-shaped panel:
//! 85 series, monthly data, probabilistic and point scores per window.
//!
//! Run with: cargo run --release -p hts-recon --example rolling_evaluation

use hts_recon::covariance::EstimatorKind;
use hts_recon::eval::{mse_table, rolling_evaluate, EvalOptions};
use hts_recon::hierarchy::build_summing_matrix;
use hts_recon::models::{Differencing, FitOptions};
use hts_recon::{method_grid, synthetic_tourism_panel};

fn main() -> hts_recon::Result<()> {
    hts_recon::init_threads_from_env();
    // A short panel keeps the example quick; `synth`/`evaluate` in the
    // CLI run the full 264-month version.
    let panel = synthetic_tourism_panel(7, 132)?;
    println!(
        "panel: {} months x {} regions ({} .. {})",
        panel.len(),
        panel.values().ncols(),
        panel.dates()[0],
        panel.dates()[panel.len() - 1]
    );

    let mut opts = EvalOptions::new(120, method_grid(&[EstimatorKind::Shrinkage]));
    opts.fit = FitOptions {
        max_p: 1,
        max_q: 1,
        difference: Differencing::None,
    };
    opts.n_draws = 2_000;
    opts.seed = 9;
    let output = rolling_evaluate(&panel, &opts)?;
    println!(
        "{} windows, {} records, max coherence discrepancy {:.2e}",
        output.n_windows,
        output.records.len(),
        output.max_coherence_discrepancy
    );

    let s = build_summing_matrix(panel.spec())?;
    let table = mse_table(&output.records, &s)?;
    println!("\nMSE relative improvement vs bottom-up (negative = better):");
    print!("{}", table.to_csv_string());
    Ok(())
}
