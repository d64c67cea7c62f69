//! Write a trajectory with a checksummed manifest and a chart, then verify it.

use lifonet::engine::{InitialCondition, SeriesMode, Simulation, StopRule};
use lifonet::model::build_fig1;
use lifonet::output::{verify_manifest, LineChart, OutputDir};

fn main() -> lifonet::Result<()> {
    let dir = std::env::temp_dir().join("lifonet-artifacts-example");
    let spec = build_fig1(1000.0, Some(0.2), false)?;
    let mut out = OutputDir::create(&dir, "artifacts-example", 9, serde_json::json!({"M": 1000.0, "delta": 0.2}))?;
    let mut sim = Simulation::new(&spec, &InitialCondition::empty(), 9)?;
    let traj = sim.record(&StopRule::Horizon(5_000.0), false, SeriesMode::Grid(50.0));
    out.write_with("trajectory.csv", |b| traj.write_series_csv(b))?;
    let pts = traj.times.iter().zip(&traj.work).map(|(t, w)| (*t, w.total)).collect();
    out.write_chart("workload.svg", &LineChart::new("Total workload", "t", "W").with_series("W", pts))?;
    out.finish("ok")?;
    let manifest = verify_manifest(&dir)?;
    for o in &manifest.outputs {
        println!("{} {}", o.sha256, o.path);
    }
    println!("written to {}", dir.display());
    Ok(())
}
