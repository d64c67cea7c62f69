//! Discrete-event kernel.

mod coupled;
mod sim;
mod station;
mod trajectory;

pub use coupled::{coupled_run, CoupledReport, Divergence};
pub use sim::{
    EventRecord, InitialCondition, InitialJob, NoObserver, Observer, RecordKind, RunOutcome, Simulation, StopReason,
    StopRule, Workloads, DEFAULT_EVENT_CAP,
};
pub use station::Job;
pub use trajectory::{Recorder, SeriesMode, Trajectory};
