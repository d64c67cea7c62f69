//! The same network and seed under every service discipline.

use lifonet::engine::{InitialCondition, NoObserver, Simulation, StopRule};
use lifonet::model::{build_fig1, ClassId, Discipline};

fn main() -> lifonet::Result<()> {
    let base = build_fig1(10.0, Some(0.5), false)?;
    let init = InitialCondition::empty().with_jobs(ClassId(1), 50);
    for d in Discipline::ALL {
        let spec = base.clone().with_discipline(d);
        let mut sim = Simulation::new(&spec, &init, 3)?;
        sim.run(&StopRule::Horizon(500.0), &mut NoObserver);
        sim.check_invariants().map_err(lifonet::Error::InvalidParameter)?;
        println!("{:<20} Z(500) = {:?}  events = {}", d.name(), sim.group_counts(), sim.steps());
    }
    Ok(())
}
