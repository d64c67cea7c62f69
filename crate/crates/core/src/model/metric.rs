//! State descriptor of the six-class network and the metric on it.
//!
//! Jobs at the multi-class stations (classes 1, 3, 4, 6) are listed as
//! `(class, age, residual)` triples, sorted by descending class and then
//! descending age; classes 2 and 5 contribute only their counts, and the two
//! sources contribute their residual interarrival clocks. Jobs present at
//! time zero have infinite age.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub class: u32,
    /// `f64::INFINITY` for a job that has been at its class since time 0.
    pub age: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub jobs: Vec<JobRecord>,
    pub z2: u64,
    pub z5: u64,
    pub u1: f64,
    pub u4: f64,
}

impl StateSnapshot {
    /// Sort job records into descriptor order.
    pub fn normalize(&mut self) {
        self.jobs.sort_by(|a, b| {
            b.class
                .cmp(&a.class)
                .then_with(|| b.age.total_cmp(&a.age))
        });
    }
}

const ZERO: JobRecord = JobRecord {
    class: 0,
    age: 0.0,
    residual: 0.0,
};

fn coord_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        // one side infinite: the term is capped anyway
        (a - b).abs()
    }
}

fn job_term(a: &JobRecord, b: &JobRecord) -> f64 {
    let raw = (a.class as f64 - b.class as f64).abs() + coord_gap(a.age, b.age) + coord_gap(a.residual, b.residual);
    raw.min(1.0)
}

/// Distance between two snapshots. Records are compared position by
/// position; the shorter list is padded with all-zero records.
pub fn state_distance(x: &StateSnapshot, y: &StateSnapshot) -> f64 {
    let n = x.jobs.len().max(y.jobs.len());
    let jobs: f64 = (0..n)
        .map(|i| job_term(x.jobs.get(i).unwrap_or(&ZERO), y.jobs.get(i).unwrap_or(&ZERO)))
        .sum();
    jobs + (x.z2 as f64 - y.z2 as f64).abs()
        + (x.z5 as f64 - y.z5 as f64).abs()
        + coord_gap(x.u1, y.u1)
        + coord_gap(x.u4, y.u4)
}
