//! Quantities derived from runs: workloads, clusters of arrivals, stopping
//! times and per-cycle reports.

mod clusters;
mod cycle;

pub use clusters::{
    cluster_bound, cluster_gap_idle, clusters_within, detect_clusters, Cluster, ClusterGapIdle, GapIdle,
};
pub use cycle::{
    cycle_report, find_s1, find_t, write_cycles_csv, CycleEvents, CycleMarks, CycleRoles, CycleTracker, Mark,
    MarkStatus,
};

use crate::engine::{Simulation, Trajectory, Workloads};

/// Workloads of the current state, summed job by job.
pub fn workloads(sim: &Simulation) -> Workloads {
    sim.exact_workloads()
}

/// Workloads of the `i`-th sample of a trajectory.
pub fn workloads_at(traj: &Trajectory, i: usize) -> Workloads {
    traj.work[i]
}
