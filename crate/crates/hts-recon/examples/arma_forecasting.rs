//! Fit an ARMA model by AICc grid search and forecast ahead.
//!
//! Run with: cargo run --release -p hts-recon --example arma_forecasting

use hts_recon::rng::derive_rng;
use hts_recon::{fit_arma, forecast, insample_residuals};
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> hts_recon::Result<()> {
    // Simulate an AR(2) series with a nonzero mean.
    let mut rng = derive_rng(2024, &[]);
    let (phi1, phi2, mu) = (0.6, -0.3, 5.0);
    let mut y = Vec::with_capacity(600);
    let (mut prev1, mut prev2) = (0.0, 0.0);
    for _ in 0..600 {
        let x = phi1 * prev1 + phi2 * prev2 + rng.sample::<f64, _>(StandardNormal);
        prev2 = prev1;
        prev1 = x;
        y.push(mu + x);
    }
    let y = &y[100..];

    let model = fit_arma(y, 3, 3)?;
    println!(
        "selected ARMA({},{}) with mean {:.3}, sigma^2 {:.3}, AICc {:.1}",
        model.p, model.q, model.mean, model.sigma2, model.aicc
    );
    println!("AR coefficients: {:?}", model.ar_coeffs);
    println!("MA coefficients: {:?}", model.ma_coeffs);

    let resid = insample_residuals(&model, y)?;
    let settled = resid.settled();
    let rmean = settled.iter().sum::<f64>() / settled.len() as f64;
    println!(
        "residuals: {} values ({} burn-in), mean {:.4}",
        resid.values.len(),
        resid.burn_in,
        rmean
    );

    let horizon = 6;
    let fc = forecast(&model, y, horizon)?;
    println!("{horizon}-step forecast: {fc:?}");
    println!("(forecast decays toward the estimated mean {:.3})", model.mean);
    Ok(())
}
