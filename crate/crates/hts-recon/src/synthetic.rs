//! Seeded synthetic panel generator shaped like the Australian domestic
//! tourism hierarchy: 77 bottom regions grouped into 7 states plus the
//! total (85 series), monthly observations with trend, seasonality and
//! autocorrelated noise.

use crate::error::Result;
use crate::eval::PanelData;
use crate::hierarchy::HierarchySpec;
use crate::rng::derive_rng;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Region labels: first character is the state (A..G), giving the
/// two-level geography with prefix lengths [0, 1].
pub const REGION_LABELS: [&str; 77] = [
    "AAA", "AAB", "ABA", "ABB", "ACA", "ADA", "ADB", "ADC", "ADD", "AEA", "AEB", "AEC", "AED",
    "AFA", "BAA", "BAB", "BAC", "BBA", "BCA", "BCB", "BCC", "BDA", "BDB", "BDC", "BDD", "BDE",
    "BDF", "BEA", "BEB", "BEC", "BED", "BEE", "BEF", "BEG", "BEH", "CAA", "CAB", "CAC", "CBA",
    "CBB", "CBC", "CBD", "CBE", "CCA", "CCB", "CCC", "CDA", "CDB", "DAA", "DAB", "DAC", "DBA",
    "DBB", "DBC", "DBD", "DCA", "DCB", "DCC", "DDA", "DDB", "EAA", "EAB", "EAC", "EBA", "ECA",
    "FAA", "FBA", "FBB", "FCA", "FCB", "GAA", "GAB", "GAC", "GBA", "GBB", "GBC", "GBD",
];

/// The two-level tourism-shaped hierarchy spec (total / 7 states / 77
/// regions).
pub fn tourism_spec() -> HierarchySpec {
    HierarchySpec::new(
        REGION_LABELS.iter().map(|s| s.to_string()).collect(),
        vec![0, 1],
    )
    .expect("static labels are valid")
}

/// Month labels "1998-01", "1998-02", ... for the given length.
pub fn month_labels(months: usize) -> Vec<String> {
    (0..months)
        .map(|i| format!("{}-{:02}", 1998 + i / 12, 1 + i % 12))
        .collect()
}

/// Generates a seeded monthly panel over the tourism-shaped hierarchy.
///
/// Each region gets its own level, mild trend, a 12-month seasonal
/// pattern and AR(1) noise; everything is drawn from streams keyed by
/// (seed, region), so the panel is reproducible.
pub fn synthetic_tourism_panel(seed: u64, months: usize) -> Result<PanelData> {
    let spec = tourism_spec();
    let n = spec.n_bottom();
    let mut values = DMatrix::<f64>::zeros(months, n);
    for j in 0..n {
        let mut rng = derive_rng(seed, &[7, j as u64]);
        let level = 80.0 + 400.0 * rng.random::<f64>();
        let trend = level * (0.0005 + 0.0015 * rng.random::<f64>());
        let season_amp = level * (0.08 + 0.20 * rng.random::<f64>());
        let season_phase = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let second_harmonic = 0.3 * season_amp * rng.random::<f64>();
        let phi = 0.2 + 0.5 * rng.random::<f64>();
        let noise_sd = level * (0.02 + 0.04 * rng.random::<f64>());
        let mut ar = 0.0;
        for t in 0..months {
            let angle = 2.0 * std::f64::consts::PI * (t % 12) as f64 / 12.0;
            let season = season_amp * (angle + season_phase).sin()
                + second_harmonic * (2.0 * angle + season_phase).cos();
            ar = phi * ar + noise_sd * rng.sample::<f64, _>(StandardNormal);
            values[(t, j)] = level + trend * t as f64 + season + ar;
        }
    }
    PanelData::new(month_labels(months), values, spec)
}
