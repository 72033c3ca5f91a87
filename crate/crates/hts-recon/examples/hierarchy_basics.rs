//! Build a summing matrix from a hierarchy spec, aggregate a bottom
//! vector and check coherence.
//!
//! Run with: cargo run --release -p hts-recon --example hierarchy_basics

use hts_recon::{aggregate, build_summing_matrix, coherence_discrepancy, HierarchySpec};
use nalgebra::DVector;

fn main() -> hts_recon::Result<()> {
    // Two groups (A, B) over five bottom series; prefix length 0 is the
    // grand total, prefix length 1 groups by the first character.
    let spec = HierarchySpec::new(
        ["AA", "AB", "AC", "BA", "BB"].iter().map(|s| s.to_string()).collect(),
        vec![0, 1],
    )?;
    let s = build_summing_matrix(&spec)?;
    println!("hierarchy: {} total series over {} bottom series", s.m(), s.n());
    println!("row labels: {:?}", s.row_labels());
    println!("S =\n{}", s.matrix());

    let bottom = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let full = aggregate(&s, &bottom)?;
    println!("aggregated y = S b: {:?}", full.as_slice());

    println!(
        "coherence of the aggregate: {:.3e}",
        coherence_discrepancy(&s, &full)?
    );

    let mut broken = full.clone();
    broken[0] += 0.25;
    println!(
        "after perturbing the total by 0.25: {:.3e}",
        coherence_discrepancy(&s, &broken)?
    );
    Ok(())
}
