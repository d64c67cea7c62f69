//! Consecutive cycles on one path with roles swapped after each cycle.

use lifonet::experiments::{exp_instability, InductionConfig};

fn main() -> lifonet::Result<()> {
    let cfg = InductionConfig {
        scale: 10_000.0,
        delta: 0.24,
        n: 83_334,
        replications: 4,
        ..InductionConfig::preset()
    };
    let report = exp_instability(&cfg, 3, 1, None)?;
    for (rep, g) in report.growth.iter().enumerate() {
        let heads: Vec<u64> = g.iter().map(|c| c.head_end).collect();
        println!("rep {rep}: head counts {heads:?}");
    }
    println!("median ratios {:?}", report.median_ratio);
    println!("median heads  {:?}", report.median_head);
    println!("min Z >= N/4 in {}/{} runs", report.min_z_hits(), cfg.replications);
    Ok(())
}
