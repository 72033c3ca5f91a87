//! Shared generators and independent oracles for the integration and
//! acceptance suites.

use hts_recon::hierarchy::{build_summing_matrix, HierarchySpec, SummingMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeSet;

/// Random strict hierarchy with n <= 20 bottom series and m <= 50 total.
///
/// Labels are three characters deep so prefix lengths {0}, {0,1} or
/// {0,1,2} all produce valid level structures.
pub fn random_hierarchy(rng: &mut ChaCha12Rng) -> SummingMatrix {
    let n = rng.random_range(1..=20usize);
    let mut labels: BTreeSet<String> = BTreeSet::new();
    while labels.len() < n {
        let label = format!(
            "{}{}{}",
            char::from(b'A' + rng.random_range(0..3u8)),
            char::from(b'1' + rng.random_range(0..4u8)),
            char::from(b'a' + rng.random_range(0..3u8)),
        );
        labels.insert(label);
    }
    let prefixes = match rng.random_range(0..3u8) {
        0 => vec![0],
        1 => vec![0, 1],
        _ => vec![0, 1, 2],
    };
    let spec = HierarchySpec::new(labels.into_iter().collect(), prefixes)
        .expect("generated labels are valid");
    let s = build_summing_matrix(&spec).expect("generated spec builds");
    assert!(s.n() <= 20 && s.m() <= 50);
    s
}

/// Random symmetric positive definite matrix with varied conditioning.
pub fn random_pd(m: usize, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let base = (&a * a.transpose()) / m as f64;
    let ridge = 0.05 + 0.45 * rng.random::<f64>();
    (&base + base.transpose()) * 0.5 + DMatrix::identity(m, m) * ridge
}

/// Random vector with standard normal entries.
pub fn random_vector(d: usize, rng: &mut ChaCha12Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// All-pairs energy score estimator; the oracle counterpart of the
/// consecutive-pair estimator used by the library.
pub fn energy_score_allpairs(draws: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    let n = draws.nrows();
    let d = draws.ncols();
    let dist = |i: usize, j: usize| -> f64 {
        let mut sq = 0.0;
        for k in 0..d {
            let diff = draws[(i, k)] - draws[(j, k)];
            sq += diff * diff;
        }
        sq.sqrt()
    };
    let mut term1 = 0.0;
    for i in 0..n {
        let mut sq = 0.0;
        for k in 0..d {
            let diff = draws[(i, k)] - z[k];
            sq += diff * diff;
        }
        term1 += sq.sqrt();
    }
    term1 /= n as f64;
    let mut pair_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            pair_sum += dist(i, j);
        }
    }
    // Ordered pairs double the i<j sum; diagonal contributes zero.
    let term2 = pair_sum / (n as f64 * n as f64);
    term1 - term2
}
