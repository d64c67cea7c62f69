//! Total workload along consecutive cycles, sampled on a grid.

use lifonet::experiments::{exp_workload_growth, InductionConfig};

fn main() -> lifonet::Result<()> {
    let cfg = InductionConfig {
        scale: 10_000.0,
        delta: 0.24,
        n: 83_334,
        replications: 2,
        ..InductionConfig::preset()
    };
    let report = exp_workload_growth(&cfg, 3, 1, None)?;
    for (rep, g) in report.growth.iter().enumerate() {
        let mins: Vec<String> = g.iter().map(|c| format!("{:.0}", c.min_work)).collect();
        println!("rep {rep}: per-cycle min W = [{}], {} grid points", mins.join(", "), report.series[rep].len());
    }
    println!("frequency of W <= N/6 per cycle: {:?}", report.work_low_frequency());
    Ok(())
}
