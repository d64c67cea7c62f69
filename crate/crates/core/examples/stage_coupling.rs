//! Run the six-class network and its stage expansion on shared randomness
//! and report the largest station-level discrepancy.

use lifonet::experiments::exp_stage_coupling;

fn main() -> lifonet::Result<()> {
    for delta in [0.5, 0.2] {
        for seed in 1..=3 {
            let r = exp_stage_coupling(100.0, delta, seed, f64::INFINITY, 1_000_000, false)?;
            println!(
                "delta = {delta}, L = {:>3}, seed = {seed}: matched {} steps, count gap {}, work gap {:.2e}",
                r.stages, r.coupling.matched_steps, r.coupling.max_count_discrepancy, r.coupling.max_work_discrepancy
            );
        }
    }
    Ok(())
}
