//! Simulate the six-class network, print station loads and a few snapshots.

use lifonet::engine::{InitialCondition, SeriesMode, Simulation, StopRule};
use lifonet::model::{build_fig1, traffic};

fn main() -> lifonet::Result<()> {
    let spec = build_fig1(1000.0, Some(0.2), false)?;
    let loads = traffic(&spec);
    for (s, rho) in spec.stations.iter().zip(&loads.station_loads) {
        println!("station {:>3}: load {rho:.4}", s.label);
    }
    let mut sim = Simulation::new(&spec, &InitialCondition::empty(), 7)?;
    let traj = sim.record(&StopRule::Horizon(20_000.0), false, SeriesMode::Grid(2_000.0));
    for i in 0..traj.len() {
        let w = traj.work[i];
        println!("t = {:>7.0}  Z = {:?}  W_total = {:.1}", traj.times[i], traj.counts_at(i), w.total);
    }
    println!("{} events, accounting error {:.2e}", sim.steps(), sim.max_accounting_error());
    Ok(())
}
