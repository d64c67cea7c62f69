use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::engine::{RecordKind, Trajectory};
use crate::error::{Error, Result};
use crate::model::GroupId;

/// A maximal run of arrivals with no gap at or above the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub start: f64,
    pub size: usize,
    pub arrivals: Vec<f64>,
}

impl Cluster {
    pub fn end(&self) -> f64 {
        *self.arrivals.last().expect("clusters are nonempty")
    }

    /// Whether every gap inside the cluster equals `atom` to within
    /// `1e-12 * atom`, widened by the rounding of the absolute times.
    pub fn gaps_equal(&self, atom: f64) -> bool {
        self.arrivals
            .windows(2)
            .all(|w| ((w[1] - w[0]) - atom).abs() <= 1e-12 * atom + 4.0 * f64::EPSILON * w[1].abs())
    }
}

/// Greedy left-to-right segmentation: a gap `>= threshold` closes the
/// current cluster. The first arrival opens a cluster.
pub fn detect_clusters(arrivals: &[f64], threshold: f64) -> Result<Vec<Cluster>> {
    if !(threshold > 0.0) {
        return Err(Error::param(format!("cluster threshold must be positive, got {threshold}")));
    }
    if let Some(i) = arrivals.windows(2).position(|w| !(w[1] >= w[0])) {
        return Err(Error::Unsorted(i + 1));
    }
    let mut out: Vec<Cluster> = Vec::new();
    for (i, &t) in arrivals.iter().enumerate() {
        let new = i == 0 || t - arrivals[i - 1] >= threshold;
        if new {
            out.push(Cluster {
                start: t,
                size: 0,
                arrivals: Vec::new(),
            });
        }
        let c = out.last_mut().expect("cluster opened");
        c.size += 1;
        c.arrivals.push(t);
    }
    Ok(out)
}

/// Clusters that intersect `(0, t0]`.
pub fn clusters_within(clusters: &[Cluster], t0: f64) -> usize {
    clusters.iter().filter(|c| c.start <= t0).count()
}

/// Upper bound `ceil(2 t0 / M)` on the number of clusters in `(0, t0]`.
pub fn cluster_bound(t0: f64, scale: f64) -> usize {
    (2.0 * t0 / scale).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapIdle {
    /// End of the cluster, `U_i + size * atom`.
    pub from: f64,
    /// Start of the next cluster.
    pub to: f64,
    /// Time in `(from, to]` with no job in the group that arrived after `from`.
    pub idle: f64,
}

impl GapIdle {
    pub fn len(&self) -> f64 {
        self.to - self.from
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterGapIdle {
    pub gaps: Vec<GapIdle>,
}

impl ClusterGapIdle {
    pub fn idle_times(&self) -> Vec<f64> {
        self.gaps.iter().map(|g| g.idle).collect()
    }
}

/// Per-gap idle times of `group` between consecutive clusters, measured
/// from the event log of `traj` (which must have been recorded with events).
pub fn cluster_gap_idle(traj: &Trajectory, clusters: &[Cluster], atom: f64, group: GroupId) -> ClusterGapIdle {
    // group-arrival time of each job currently in the group
    let mut in_group: HashMap<u64, f64> = HashMap::new();
    let mut ev = traj.events.iter().peekable();
    let mut out = ClusterGapIdle::default();
    for pair in clusters.windows(2) {
        let from = pair[0].start + pair[0].size as f64 * atom;
        let to = pair[1].start;
        if !(to > from) {
            out.gaps.push(GapIdle { from, to: from, idle: 0.0 });
            continue;
        }
        let mut fresh = 0usize;
        let mut last = from;
        let mut busy = 0.0;
        while let Some(e) = ev.peek() {
            if e.time > to {
                break;
            }
            let e = ev.next().expect("peeked");
            let g = traj.class_groups[e.class.0];
            if e.time > from && fresh > 0 {
                busy += e.time - last.max(from);
            }
            if e.time > from {
                last = e.time;
            }
            match e.kind {
                RecordKind::Arrival if g == group.0 => {
                    if let std::collections::hash_map::Entry::Vacant(v) = in_group.entry(e.job_id) {
                        v.insert(e.time);
                        if e.time > from {
                            fresh += 1;
                        }
                    }
                }
                RecordKind::Departure if g == group.0 => {
                    // leaving the group unless the next record re-enters it
                    let stays = ev.peek().is_some_and(|n| {
                        n.kind == RecordKind::Arrival
                            && n.job_id == e.job_id
                            && n.time == e.time
                            && traj.class_groups[n.class.0] == group.0
                    });
                    if stays {
                        ev.next();
                    } else if let Some(t) = in_group.remove(&e.job_id) {
                        if t > from {
                            fresh -= 1;
                        }
                    }
                }
                _ => {}
            }
        }
        if fresh > 0 {
            busy += to - last.max(from);
        }
        out.gaps.push(GapIdle {
            from,
            to,
            idle: (to - from - busy).max(0.0),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_clusters() {
        let c = detect_clusters(&[0.0001, 0.0002, 90.0, 90.0001], 80.0).unwrap();
        assert_eq!(c.iter().map(|c| c.size).collect::<Vec<_>>(), vec![2, 2]);
        assert_eq!(c[1].start, 90.0);
    }

    #[test]
    fn single_and_empty() {
        assert_eq!(detect_clusters(&[3.0], 1.0).unwrap().len(), 1);
        assert!(detect_clusters(&[], 1.0).unwrap().is_empty());
    }

    #[test]
    fn unsorted_rejected() {
        assert!(matches!(detect_clusters(&[1.0, 0.5], 1.0), Err(Error::Unsorted(1))));
    }

    #[test]
    fn bound() {
        assert_eq!(cluster_bound(100.0 * 50.0, 50.0), 200);
        assert_eq!(cluster_bound(1.0, 50.0), 1);
    }
}
