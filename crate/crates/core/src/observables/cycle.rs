//! Stopping times of one induction cycle and the events evaluated at them.
//!
//! A cycle starts with `N` jobs in a head group. `S1` is the first time the
//! head group is empty; `T` is the first time at or after `S1` that the
//! mirror station (the station holding the drained groups) is empty. The
//! roles swap from one cycle to the next.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{Observer, Simulation, Trajectory, Workloads};
use crate::error::Result;
use crate::model::GroupId;

/// Group roles of one cycle, as indices into the group list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRoles {
    /// Emptied at `S1` (group 2 in the first cycle).
    pub head: usize,
    /// Classes of the station that empties at `T` (3 and 4).
    pub station: [usize; 2],
    /// Head of the next cycle (5).
    pub next_head: usize,
    /// Upstream of the head (1 and 2).
    pub feeders: [usize; 2],
    /// Immediate workload read at `T` (6).
    pub other_drain: usize,
    /// Whether `W3`/`W6` swap roles.
    pub mirrored: bool,
}

impl CycleRoles {
    /// Roles on the six-class network with groups labelled `1..=6` in order.
    pub fn six_class(mirrored: bool) -> Self {
        if mirrored {
            CycleRoles {
                head: 4,
                station: [5, 0],
                next_head: 1,
                feeders: [3, 4],
                other_drain: 2,
                mirrored,
            }
        } else {
            CycleRoles {
                head: 1,
                station: [2, 3],
                next_head: 4,
                feeders: [0, 1],
                other_drain: 5,
                mirrored,
            }
        }
    }

    pub fn swapped(&self) -> Self {
        Self::six_class(!self.mirrored)
    }

    fn station_work(&self, w: &Workloads) -> f64 {
        if self.mirrored {
            w.w6
        } else {
            w.w3
        }
    }

    fn other_work(&self, w: &Workloads) -> f64 {
        if self.mirrored {
            w.w3
        } else {
            w.w6
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkStatus {
    Reached,
    /// The head group was already empty at the start.
    Degenerate,
    /// Not reached within the observed run.
    NotReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub time: f64,
    pub status: MarkStatus,
}

/// The five events evaluated at the end of a cycle, plus time windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleEvents {
    /// `Z_next(T) >= N / 4δ`.
    pub next_head: bool,
    /// `Z_feed(T) <= 1000 δ N`.
    pub feeders: bool,
    /// Both station groups empty at `T`.
    pub station_empty: bool,
    /// `W_other(T) <= δ³ N`.
    pub other_work: bool,
    /// `Z(t) >= N / 4` on `[0, T]`.
    pub min_occupancy: bool,
    /// `T ∈ [N / 3δ, 3N / δ]`.
    pub t_window: bool,
    /// `S1 ∈ [N / 2δ, 2N / δ]`.
    pub s1_window: bool,
    /// `S2 <= 4 a δ² N'` with the empirical `a` and `N' = Z_station(S1)`.
    pub s2_bound: bool,
    /// `Z(t) >= N / 3` on `[0, S1]`.
    pub min_occupancy_s1: bool,
}

impl CycleEvents {
    /// Bitmask of the five end-of-cycle events, bit 0 = `next_head`.
    pub fn mask(&self) -> u8 {
        [self.next_head, self.feeders, self.station_empty, self.other_work, self.min_occupancy]
            .iter()
            .enumerate()
            .fold(0, |m, (i, &b)| m | ((b as u8) << i))
    }

    pub fn all(&self) -> bool {
        self.mask() == 0b11111
    }
}

/// Measured values of one cycle. Times are relative to the cycle start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMarks {
    pub cycle: usize,
    pub roles: CycleRoles,
    pub start: f64,
    /// Head count at the start (`N`).
    pub n: u64,
    pub delta: f64,
    pub s1: Mark,
    pub t: Mark,
    pub s2: f64,
    pub counts_s1: Vec<u64>,
    pub station_work_s1: f64,
    pub next_head_t: u64,
    pub feeders_t: u64,
    pub station_t: u64,
    pub other_work_t: f64,
    pub min_z: u64,
    pub min_z_s1: u64,
    pub min_work: f64,
    /// `max(W_station(S1), Σ other counts at S1) / (δ³ N')`.
    pub empirical_a: f64,
    /// Whether `𝒲(t) <= N/6` at some time in the cycle.
    pub work_low: bool,
    pub events: Option<CycleEvents>,
}

impl CycleMarks {
    pub fn complete(&self) -> bool {
        self.t.status != MarkStatus::NotReached && self.s1.status != MarkStatus::NotReached
    }

    pub fn s1_abs(&self) -> f64 {
        self.start + self.s1.time
    }

    pub fn t_abs(&self) -> f64 {
        self.start + self.t.time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Start,
    BeforeS1,
    BeforeT,
    Done,
}

/// Streaming evaluation of one cycle. Feed state samples in time order; the
/// samples must include every event time.
#[derive(Debug, Clone)]
pub struct CycleTracker {
    marks: CycleMarks,
    phase: Phase,
    last: Option<(f64, f64, f64)>,
}

impl CycleTracker {
    pub fn new(cycle: usize, roles: CycleRoles, delta: f64) -> Self {
        CycleTracker {
            marks: CycleMarks {
                cycle,
                roles,
                start: 0.0,
                n: 0,
                delta,
                s1: Mark { time: f64::NAN, status: MarkStatus::NotReached },
                t: Mark { time: f64::NAN, status: MarkStatus::NotReached },
                s2: f64::NAN,
                counts_s1: Vec::new(),
                station_work_s1: f64::NAN,
                next_head_t: 0,
                feeders_t: 0,
                station_t: 0,
                other_work_t: f64::NAN,
                min_z: u64::MAX,
                min_z_s1: u64::MAX,
                min_work: f64::INFINITY,
                empirical_a: f64::NAN,
                work_low: false,
                events: None,
            },
            phase: Phase::Start,
            last: None,
        }
    }

    pub fn done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn s1_reached(&self) -> bool {
        matches!(self.phase, Phase::BeforeT | Phase::Done)
    }

    /// Feed one sample. `drain` is the rate at which total workload falls
    /// after this sample, if known; it lets the minimum of the workload
    /// account for the linear decrease before the next jump.
    pub fn observe(&mut self, time: f64, counts: &[u64], work: Workloads, drain: Option<f64>) {
        if self.phase == Phase::Done {
            return;
        }
        let r = self.marks.roles;
        if self.phase == Phase::Start {
            self.marks.start = time;
            self.marks.n = counts[r.head];
            self.phase = Phase::BeforeS1;
        }
        let total: u64 = counts.iter().sum();
        self.marks.min_z = self.marks.min_z.min(total);
        if self.phase == Phase::BeforeS1 {
            self.marks.min_z_s1 = self.marks.min_z_s1.min(total);
        }
        if let Some((t0, w0, rate)) = self.last {
            let before = (w0 - rate * (time - t0)).max(0.0);
            self.marks.min_work = self.marks.min_work.min(before);
        }
        self.marks.min_work = self.marks.min_work.min(work.total);
        self.last = drain.map(|d| (time, work.total, d));
        let rel = time - self.marks.start;

        if self.phase == Phase::BeforeS1 && counts[r.head] == 0 {
            self.marks.s1 = Mark {
                time: rel,
                status: if self.marks.n == 0 { MarkStatus::Degenerate } else { MarkStatus::Reached },
            };
            self.marks.counts_s1 = counts.to_vec();
            self.marks.station_work_s1 = r.station_work(&work);
            self.phase = Phase::BeforeT;
        }
        if self.phase == Phase::BeforeT && counts[r.station[0]] + counts[r.station[1]] == 0 {
            self.marks.t = Mark { time: rel, status: MarkStatus::Reached };
            self.marks.s2 = rel - self.marks.s1.time;
            self.marks.next_head_t = counts[r.next_head];
            self.marks.feeders_t = counts[r.feeders[0]] + counts[r.feeders[1]];
            self.marks.station_t = 0;
            self.marks.other_work_t = r.other_work(&work);
            self.phase = Phase::Done;
        }
    }

    /// Evaluate the events and return the marks.
    pub fn finish(mut self) -> CycleMarks {
        let m = &mut self.marks;
        if m.min_work.is_infinite() {
            m.min_work = f64::NAN;
        }
        let n = m.n as f64;
        let d = m.delta;
        m.work_low = m.min_work <= n / 6.0;
        if self.phase == Phase::Done {
            let r = m.roles;
            let n_station = m.counts_s1[r.station[1]] as f64;
            let others: u64 = m
                .counts_s1
                .iter()
                .enumerate()
                .filter(|(i, _)| !r.station.contains(i))
                .map(|(_, c)| c)
                .sum();
            m.empirical_a = m.station_work_s1.max(others as f64) / (d.powi(3) * n_station);
            m.events = Some(CycleEvents {
                next_head: m.next_head_t as f64 >= n / (4.0 * d),
                feeders: m.feeders_t as f64 <= 1e3 * d * n,
                station_empty: m.station_t == 0,
                other_work: m.other_work_t <= d.powi(3) * n,
                min_occupancy: m.min_z as f64 >= n / 4.0,
                t_window: m.t.time >= n / (3.0 * d) && m.t.time <= 3.0 * n / d,
                s1_window: m.s1.time >= n / (2.0 * d) && m.s1.time <= 2.0 * n / d,
                s2_bound: m.s2 <= 4.0 * m.empirical_a * d * d * n_station,
                min_occupancy_s1: m.min_z_s1 as f64 >= n / 3.0,
            });
        } else {
            m.s2 = f64::NAN;
        }
        self.marks
    }
}

impl Observer for CycleTracker {
    fn on_start(&mut self, sim: &Simulation) {
        if self.phase == Phase::Start {
            self.observe(sim.clock(), sim.group_counts(), sim.workloads(), Some(sim.work_drain_rate()));
        }
    }

    fn on_step(&mut self, sim: &Simulation) {
        self.observe(sim.clock(), sim.group_counts(), sim.workloads(), Some(sim.work_drain_rate()));
    }
}

/// First sample time with the head group empty, relative to the first sample.
pub fn find_s1(traj: &Trajectory, head: GroupId) -> Mark {
    let Some(&t0) = traj.times.first() else {
        return Mark { time: f64::NAN, status: MarkStatus::NotReached };
    };
    if traj.counts_at(0)[head.0] == 0 {
        return Mark { time: 0.0, status: MarkStatus::Degenerate };
    }
    (0..traj.len())
        .find(|&i| traj.counts_at(i)[head.0] == 0)
        .map_or(Mark { time: f64::NAN, status: MarkStatus::NotReached }, |i| Mark {
            time: traj.times[i] - t0,
            status: MarkStatus::Reached,
        })
}

/// First sample time at or after `s1` with both station groups empty.
pub fn find_t(traj: &Trajectory, s1: f64, station: [GroupId; 2]) -> Mark {
    let Some(&t0) = traj.times.first() else {
        return Mark { time: f64::NAN, status: MarkStatus::NotReached };
    };
    if !s1.is_finite() {
        return Mark { time: f64::NAN, status: MarkStatus::NotReached };
    }
    (0..traj.len())
        .find(|&i| {
            let c = traj.counts_at(i);
            traj.times[i] - t0 >= s1 && c[station[0].0] + c[station[1].0] == 0
        })
        .map_or(Mark { time: f64::NAN, status: MarkStatus::NotReached }, |i| Mark {
            time: traj.times[i] - t0,
            status: MarkStatus::Reached,
        })
}

/// Marks of a cycle recorded as a trajectory sampled at every event.
pub fn cycle_report(traj: &Trajectory, roles: CycleRoles, delta: f64) -> CycleMarks {
    let mut tr = CycleTracker::new(0, roles, delta);
    for i in 0..traj.len() {
        tr.observe(traj.times[i], traj.counts_at(i), traj.work[i], None);
        if tr.done() {
            break;
        }
    }
    tr.finish()
}

/// One CSV row per cycle.
pub fn write_cycles_csv<W: Write>(marks: &[CycleMarks], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cycle", "S1", "S2", "T", "Z5_T", "Z12_T", "W6_T", "minZ", "events_ok"])?;
    for m in marks {
        out.write_record([
            m.cycle.to_string(),
            m.s1.time.to_string(),
            m.s2.to_string(),
            m.t.time.to_string(),
            m.next_head_t.to_string(),
            m.feeders_t.to_string(),
            m.other_work_t.to_string(),
            m.min_z.to_string(),
            m.events.map_or(String::new(), |e| e.mask().to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(total: f64, w3: f64, w6: f64) -> Workloads {
        Workloads { w3, w6, total }
    }

    /// Hand-made cycle with N = 100, delta = 0.1: head empties at 600,
    /// station IV empties at 900.
    fn samples() -> Vec<(f64, [u64; 6], Workloads)> {
        vec![
            (0.0, [0, 100, 0, 0, 0, 0], w(180.0, 0.0, 0.0)),
            (300.0, [0, 50, 20, 0, 40, 0], w(150.0, 10.0, 0.0)),
            (600.0, [0, 0, 30, 5, 200, 0], w(250.0, 30.0, 0.05)),
            (700.0, [0, 0, 10, 0, 260, 1], w(240.0, 10.0, 0.05)),
            (900.0, [1, 0, 0, 0, 300, 1], w(270.0, 0.0, 0.08)),
            (950.0, [0, 0, 4, 0, 290, 0], w(260.0, 4.0, 0.0)),
        ]
    }

    fn tracked() -> CycleMarks {
        let mut tr = CycleTracker::new(1, CycleRoles::six_class(false), 0.1);
        for (t, c, wk) in samples() {
            tr.observe(t, &c, wk, None);
        }
        assert!(tr.done());
        tr.finish()
    }

    #[test]
    fn stopping_times_and_readings() {
        let m = tracked();
        assert_eq!(m.n, 100);
        assert_eq!(m.s1, Mark { time: 600.0, status: MarkStatus::Reached });
        assert_eq!(m.t, Mark { time: 900.0, status: MarkStatus::Reached });
        assert_eq!(m.s2, 300.0);
        assert_eq!(m.next_head_t, 300);
        assert_eq!(m.feeders_t, 1);
        assert_eq!(m.other_work_t, 0.08);
        assert_eq!(m.min_z, 100);
        assert_eq!(m.min_z_s1, 100);
        assert_eq!(m.min_work, 150.0);
        // max(W3(S1) = 30, other jobs = 200) / (delta^3 * Z4(S1) = 0.005)
        assert!((m.empirical_a - 200.0 / 0.005).abs() < 1e-6);
    }

    #[test]
    fn events_follow_thresholds() {
        let e = tracked().events.unwrap();
        // N / 4delta = 250 <= 300
        assert!(e.next_head);
        assert!(e.feeders);
        assert!(e.station_empty);
        // delta^3 N = 0.1
        assert!(e.other_work);
        // min Z = 100 >= 25
        assert!(e.min_occupancy);
        assert!(e.all());
        assert_eq!(e.mask(), 0b11111);
        // T in [333.3, 3000], S1 in [500, 2000]
        assert!(e.t_window && e.s1_window);
    }

    #[test]
    fn trajectory_scan_agrees_with_tracker() {
        let mut traj = Trajectory::new(&crate::model::build_fig1(100.0, Some(0.1), false).unwrap());
        for (t, c, wk) in samples() {
            traj.push_sample(t, &c, wk);
        }
        let s1 = find_s1(&traj, GroupId(1));
        assert_eq!(s1.time, 600.0);
        assert_eq!(find_t(&traj, s1.time, [GroupId(2), GroupId(3)]).time, 900.0);
        assert_eq!(cycle_report(&traj, CycleRoles::six_class(false), 0.1).t.time, 900.0);
    }

    #[test]
    fn unfinished_cycle_has_no_events() {
        let mut tr = CycleTracker::new(1, CycleRoles::six_class(false), 0.1);
        for (t, c, wk) in samples().into_iter().take(3) {
            tr.observe(t, &c, wk, None);
        }
        let m = tr.finish();
        assert!(!m.complete());
        assert!(m.events.is_none());
        assert!(m.s2.is_nan());
    }

    #[test]
    fn empty_head_is_degenerate() {
        let mut tr = CycleTracker::new(1, CycleRoles::six_class(false), 0.1);
        tr.observe(0.0, &[0; 6], w(0.0, 0.0, 0.0), None);
        assert_eq!(tr.finish().s1.status, MarkStatus::Degenerate);
    }

    #[test]
    fn drain_lowers_the_workload_minimum_between_samples() {
        let mut tr = CycleTracker::new(1, CycleRoles::six_class(false), 0.1);
        tr.observe(0.0, &[0, 10, 0, 0, 0, 0], w(20.0, 0.0, 0.0), Some(1.0));
        tr.observe(15.0, &[0, 9, 1, 0, 0, 0], w(12.0, 1.0, 0.0), Some(1.0));
        assert_eq!(tr.finish().min_work, 5.0);
    }

    #[test]
    fn mirrored_roles_swap_back() {
        let r = CycleRoles::six_class(false);
        assert_eq!(r.swapped().swapped(), r);
        assert_eq!(r.swapped().head, r.next_head);
    }
}
