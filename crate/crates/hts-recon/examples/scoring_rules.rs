//! Evaluate Gaussian and sample-based predictive distributions with the
//! univariate and multivariate scoring rules.
//!
//! Run with: cargo run --release -p hts-recon --example scoring_rules

use hts_recon::{
    crps_empirical, crps_gaussian, energy_score, interval_score, logscore, sample_gaussian,
    uniform_weights, variogram_score, GaussianDensity,
};
use nalgebra::{DMatrix, DVector};

fn main() -> hts_recon::Result<()> {
    // A bivariate forecast density and a realization slightly off-center.
    let mean = DVector::from_column_slice(&[1.0, -0.5]);
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 2.0]);
    let density = GaussianDensity::new(mean, cov)?;
    let z = DVector::from_column_slice(&[1.8, 0.1]);

    println!("log score (joint): {:.4}", logscore(&density, &z)?);

    // Univariate scores on the first margin.
    let (mu, sd, z1) = (1.0, 1.0, 1.8);
    println!("CRPS closed form:  {:.4}", crps_gaussian(mu, sd, z1)?);
    println!(
        "80% interval score: {:.4}",
        interval_score(mu - 1.2816 * sd, mu + 1.2816 * sd, 0.2, z1)?
    );

    // Sample-based estimators from seeded draws of the joint density.
    let draws = sample_gaussian(&density, 10_000, 42)?;
    println!("energy score:      {:.4}", energy_score(&draws, &z)?);
    println!(
        "variogram score:   {:.4}",
        variogram_score(&draws, &z, 0.5, &uniform_weights(2))?
    );

    // Empirical CRPS from the first margin of the same draws converges to
    // the closed form.
    let margin: Vec<f64> = draws.draws().column(0).iter().copied().collect();
    println!(
        "CRPS empirical:    {:.4} (closed form {:.4})",
        crps_empirical(&margin, z1)?,
        crps_gaussian(mu, sd, z1)?
    );
    Ok(())
}
