//! Build a network from TOML: a two-class re-entrant line with one LIFO
//! station and one exponential station.

use lifonet::engine::{InitialCondition, NoObserver, Simulation, StopRule};
use lifonet::model::{traffic, ClassId, NetworkSpec};

const NET: &str = r#"
name = "reentrant"
groups = ["a", "b", "c"]

[[classes]]
label = "a"
station = 0
group = 0
next = 1
service = { kind = "exponential", mean = 0.3 }

[[classes]]
label = "b"
station = 1
group = 1
next = 2
service = { kind = "deterministic", mean = 0.5 }

[[classes]]
label = "c"
station = 0
group = 2
service = { kind = "exponential", mean = 0.4 }

[[stations]]
label = "A"
discipline = "lifo_preemptive"
classes = [0, 2]

[[stations]]
label = "B"
discipline = "fifo"
classes = [1]

[[sources]]
label = "in"
entry = 0
law = { kind = "exponential", mean = 1.0 }
"#;

fn main() -> lifonet::Result<()> {
    let spec = NetworkSpec::from_toml(NET)?;
    spec.validate()?;
    println!("loads: {:?}", traffic(&spec).station_loads);
    let mut sim = Simulation::new(&spec, &InitialCondition::empty(), 11)?;
    sim.run(&StopRule::Horizon(10_000.0), &mut NoObserver);
    println!("Z(10000) = {:?}, completed routes = {}", sim.group_counts(), sim.departures(ClassId(2)));
    Ok(())
}
