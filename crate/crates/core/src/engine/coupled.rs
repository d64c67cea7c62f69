//! Lockstep comparison of a network and a stage expansion of it.
//!
//! Both runs are driven by the same seed. Steps that move a job between
//! classes of the same station leave station counts unchanged and are
//! skipped; every other step of one run is matched against the next such
//! step of the other.

use serde::{Deserialize, Serialize};

use super::sim::{InitialCondition, Simulation, Workloads};
use super::trajectory::{Recorder, SeriesMode, Trajectory};
use super::Observer;
use crate::error::{Error, Result};
use crate::model::NetworkSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub index: u64,
    pub time_a: f64,
    pub time_b: f64,
    pub counts_a: Vec<u64>,
    pub counts_b: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledReport {
    /// Station-level steps compared.
    pub matched_steps: u64,
    pub max_count_discrepancy: u64,
    pub max_work_discrepancy: f64,
    pub max_time_discrepancy: f64,
    pub first_divergence: Option<Divergence>,
    pub trajectory_a: Option<Trajectory>,
    pub trajectory_b: Option<Trajectory>,
}

/// Advance to the next step that changes some station count. Returns
/// `false` if the run cannot advance past `horizon`.
fn next_station_step(sim: &mut Simulation, horizon: f64, rec: &mut Option<Recorder>) -> bool {
    let before = sim.station_counts();
    loop {
        match sim.next_live_time() {
            Some(t) if t <= horizon => {}
            _ => return false,
        }
        sim.step();
        if let Some(r) = rec.as_mut() {
            for e in sim.last_records() {
                r.on_record(e);
            }
            r.on_step(sim);
        }
        if sim.station_counts() != before {
            return true;
        }
    }
}

fn work_gap(a: Workloads, b: Workloads) -> f64 {
    (a.w3 - b.w3)
        .abs()
        .max((a.w6 - b.w6).abs())
        .max((a.total - b.total).abs())
}

/// Run two networks with the same station layout from the same seed and
/// compare station-level job counts, workloads and event times until the
/// horizon or until `max_steps` station-level steps have been compared.
pub fn coupled_run(
    spec_a: &NetworkSpec,
    spec_b: &NetworkSpec,
    init: &InitialCondition,
    seed: u64,
    horizon: f64,
    max_steps: u64,
    keep_trajectories: bool,
) -> Result<CoupledReport> {
    if spec_a.stations.len() != spec_b.stations.len() || spec_a.groups != spec_b.groups {
        return Err(Error::Topology("coupled networks must share stations and groups".into()));
    }
    let mut a = Simulation::new(spec_a, init, seed)?;
    let mut b = Simulation::new(spec_b, init, seed)?;
    let mut rec_a = keep_trajectories.then(|| Recorder::new(spec_a, true, SeriesMode::Every));
    let mut rec_b = keep_trajectories.then(|| Recorder::new(spec_b, true, SeriesMode::Every));
    if let (Some(ra), Some(rb)) = (rec_a.as_mut(), rec_b.as_mut()) {
        ra.on_start(&a);
        rb.on_start(&b);
    }
    let mut report = CoupledReport {
        matched_steps: 0,
        max_count_discrepancy: 0,
        max_work_discrepancy: work_gap(a.workloads(), b.workloads()),
        max_time_discrepancy: 0.0,
        first_divergence: None,
        trajectory_a: None,
        trajectory_b: None,
    };
    while report.matched_steps < max_steps {
        let more_a = next_station_step(&mut a, horizon, &mut rec_a);
        let more_b = next_station_step(&mut b, horizon, &mut rec_b);
        if !more_a && !more_b {
            break;
        }
        report.matched_steps += 1;
        let (ca, cb) = (a.station_counts(), b.station_counts());
        let gap = if more_a != more_b {
            u64::MAX
        } else {
            ca.iter().zip(&cb).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
        };
        let (ta, tb) = (a.clock(), b.clock());
        if more_a == more_b {
            report.max_time_discrepancy = report.max_time_discrepancy.max((ta - tb).abs());
            report.max_work_discrepancy = report.max_work_discrepancy.max(work_gap(a.workloads(), b.workloads()));
        }
        if gap > 0 {
            report.max_count_discrepancy = report.max_count_discrepancy.max(gap);
            if report.first_divergence.is_none() {
                report.first_divergence = Some(Divergence {
                    index: report.matched_steps,
                    time_a: ta,
                    time_b: tb,
                    counts_a: ca,
                    counts_b: cb,
                });
            }
            break;
        }
    }
    if let Some(r) = rec_a {
        report.trajectory_a = Some(r.finish(a.outcome_now()));
    }
    if let Some(r) = rec_b {
        report.trajectory_b = Some(r.finish(b.outcome_now()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_fig1;

    #[test]
    fn network_coupled_with_itself_never_diverges() {
        let spec = build_fig1(100.0, Some(0.3), false).unwrap();
        let init = InitialCondition::empty().with_jobs(crate::model::ClassId(1), 30);
        let r = coupled_run(&spec, &spec, &init, 4, f64::INFINITY, 20_000, false).unwrap();
        assert_eq!(r.matched_steps, 20_000);
        assert_eq!(r.max_count_discrepancy, 0);
        assert_eq!(r.max_work_discrepancy, 0.0);
        assert_eq!(r.max_time_discrepancy, 0.0);
        assert!(r.first_divergence.is_none());
    }

    #[test]
    fn zero_horizon_compares_only_the_initial_state() {
        let spec = build_fig1(100.0, Some(0.3), false).unwrap();
        let r = coupled_run(&spec, &spec, &InitialCondition::empty(), 1, 0.0, 1000, true).unwrap();
        assert_eq!(r.matched_steps, 0);
        assert_eq!(r.max_count_discrepancy, 0);
    }

    #[test]
    fn different_service_means_diverge_and_are_reported() {
        let a = build_fig1(100.0, Some(0.3), false).unwrap();
        let b = build_fig1(100.0, Some(0.35), false).unwrap();
        let r = coupled_run(&a, &b, &InitialCondition::empty(), 1, f64::INFINITY, 100_000, false).unwrap();
        let d = r.first_divergence.expect("divergence");
        assert!(r.max_count_discrepancy > 0);
        assert_ne!(d.counts_a, d.counts_b);
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let a = build_fig1(100.0, Some(0.3), false).unwrap();
        let mut b = a.clone();
        b.groups.push("7".into());
        assert!(coupled_run(&a, &b, &InitialCondition::empty(), 1, 1.0, 10, false).is_err());
    }
}
