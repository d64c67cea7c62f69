//! One induction cycle from `Z2(0) = N`: stopping times, end-of-cycle counts
//! and which events held.

use lifonet::experiments::{run_cycles, InductionConfig};

fn main() -> lifonet::Result<()> {
    let cfg = InductionConfig {
        scale: 10_000.0,
        delta: 0.24,
        n: 83_334,
        replications: 1,
        ..InductionConfig::preset()
    };
    for rep in 0..3 {
        let run = run_cycles(&cfg, rep, 1)?;
        let m = &run.cycles[0];
        println!(
            "rep {rep}: S1 = {:.0}, T = {:.0}, Z5(T) = {}, Z1+Z2 = {}, min Z = {}, a = {:.2}, events = {:?}",
            m.s1.time, m.t.time, m.next_head_t, m.feeders_t, m.min_z, m.empirical_a, m.events
        );
    }
    Ok(())
}
