use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::station::{key_cmp, Job, JobIdx, Queue, Station};
use crate::error::{Error, Result};
use crate::model::{snap_to_grid, ClassId, Discipline, GroupId, JobRecord, NetworkSpec, StateSnapshot, StationId};
use crate::stochastics::{ArrivalLaw, RngStream, ServiceLaw, StreamKey};

pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Arrival,
    Departure,
    Preempt,
    Resume,
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Arrival => "arrival",
            RecordKind::Departure => "departure",
            RecordKind::Preempt => "preempt",
            RecordKind::Resume => "resume",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: RecordKind,
    pub class: ClassId,
    pub job_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialJob {
    pub class: ClassId,
    /// Remaining service; sampled from the class law when absent.
    pub residual: Option<f64>,
}

/// Jobs present at time zero (in creation order) and optional explicit
/// residual interarrival clocks per source.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub jobs: Vec<InitialJob>,
    pub clocks: Vec<Option<f64>>,
}

impl InitialCondition {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_jobs(mut self, class: ClassId, count: usize) -> Self {
        self.jobs
            .extend(std::iter::repeat_n(InitialJob { class, residual: None }, count));
        self
    }

    pub fn with_job(mut self, class: ClassId, residual: f64) -> Self {
        self.jobs.push(InitialJob {
            class,
            residual: Some(residual),
        });
        self
    }

    pub fn with_clock(mut self, source: usize, t: f64) -> Self {
        if self.clocks.len() <= source {
            self.clocks.resize(source + 1, None);
        }
        self.clocks[source] = Some(t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival(u32),
    Completion(u32, u64),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone)]
struct SourceState {
    law: ArrivalLaw,
    entry: u32,
    rng: RngStream,
    next_time: f64,
}

/// When a run stops.
pub enum StopRule {
    /// Process events with time `<= t`, then advance the clock to `t`.
    Horizon(f64),
    /// Process this many events.
    MaxEvents(u64),
    GroupEmpty(GroupId),
    /// All listed groups simultaneously empty.
    GroupsEmpty(Vec<GroupId>),
    StationEmpty(StationId),
    Predicate(Box<dyn Fn(&Simulation) -> bool + Send + Sync>),
    /// First of several rules.
    Any(Vec<StopRule>),
}

impl std::fmt::Debug for StopRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopRule::Horizon(t) => write!(f, "Horizon({t})"),
            StopRule::MaxEvents(n) => write!(f, "MaxEvents({n})"),
            StopRule::GroupEmpty(g) => write!(f, "GroupEmpty({})", g.0),
            StopRule::GroupsEmpty(g) => write!(f, "GroupsEmpty({g:?})"),
            StopRule::StationEmpty(s) => write!(f, "StationEmpty({})", s.0),
            StopRule::Predicate(_) => write!(f, "Predicate(..)"),
            StopRule::Any(v) => write!(f, "Any({v:?})"),
        }
    }
}

impl StopRule {
    fn satisfied(&self, sim: &Simulation, steps: u64) -> bool {
        match self {
            StopRule::Horizon(_) => false,
            StopRule::MaxEvents(n) => steps >= *n,
            StopRule::GroupEmpty(g) => sim.group_count(*g) == 0,
            StopRule::GroupsEmpty(gs) => gs.iter().all(|g| sim.group_count(*g) == 0),
            StopRule::StationEmpty(s) => sim.station_len(*s) == 0,
            StopRule::Predicate(p) => p(sim),
            StopRule::Any(v) => v.iter().any(|r| r.satisfied(sim, steps)),
        }
    }

    fn horizon(&self) -> Option<f64> {
        match self {
            StopRule::Horizon(t) => Some(*t),
            StopRule::Any(v) => v.iter().filter_map(|r| r.horizon()).reduce(f64::min),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Satisfied,
    Horizon,
    /// Hard event cap hit before the rule was satisfied.
    EventCap,
    /// No pending events (empty network with no sources).
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub reason: StopReason,
    pub steps: u64,
    pub time: f64,
}

impl RunOutcome {
    pub fn truncated(&self) -> bool {
        matches!(self.reason, StopReason::EventCap | StopReason::Exhausted)
    }
}

/// Hooks called by [`Simulation::run`].
pub trait Observer {
    fn on_start(&mut self, _sim: &Simulation) {}
    fn on_record(&mut self, _rec: &EventRecord) {}
    /// After every processed event.
    fn on_step(&mut self, _sim: &Simulation) {}
    /// Next grid time at which a sample is wanted, if any.
    fn next_grid(&self) -> Option<f64> {
        None
    }
    /// Called with the clock advanced to the grid time.
    fn on_grid(&mut self, _sim: &Simulation) {}
}

/// Observer that ignores everything.
pub struct NoObserver;
impl Observer for NoObserver {}

/// Immediate and total workloads.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Workloads {
    pub w3: f64,
    pub w6: f64,
    pub total: f64,
}

/// Deterministic discrete-event simulation of a network.
#[derive(Debug, Clone)]
pub struct Simulation {
    spec: NetworkSpec,
    clock: f64,
    jobs: Vec<Job>,
    free: Vec<JobIdx>,
    live: u64,
    stations: Vec<Station>,
    class_station: Vec<u32>,
    class_local: Vec<u32>,
    class_group: Vec<u32>,
    class_next: Vec<Option<u32>>,
    class_service: Vec<ServiceLaw>,
    tail_in_group: Vec<f64>,
    tail_total: Vec<f64>,
    station_local_counts: Vec<Vec<u64>>,
    station_local_groups: Vec<Vec<u32>>,
    group_station: Vec<Option<u32>>,
    class_count: Vec<u64>,
    group_count: Vec<u64>,
    initial_class_count: Vec<u64>,
    arrivals: Vec<u64>,
    external: Vec<u64>,
    departures: Vec<u64>,
    initial_departures: Vec<u64>,
    group_work: Vec<f64>,
    total_work: f64,
    work_drain: f64,
    sources: Vec<SourceState>,
    service_rng: Vec<RngStream>,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    next_id: u64,
    steps: u64,
    event_cap: u64,
    records: Vec<EventRecord>,
    touched: SmallVec<[(u32, Option<JobIdx>); 4]>,
    departed: Option<JobIdx>,
    max_accounting_error: f64,
    w3_group: Option<u32>,
    w6_group: Option<u32>,
    quantum: Option<f64>,
}

impl Simulation {
    /// Materialise the initial state.
    pub fn new(spec: &NetworkSpec, init: &InitialCondition, seed: u64) -> Result<Self> {
        Self::with_key(spec, init, StreamKey::root(seed))
    }

    pub fn with_key(spec: &NetworkSpec, init: &InitialCondition, key: StreamKey) -> Result<Self> {
        spec.validate()?;
        let nc = spec.classes.len();
        let ng = spec.groups.len();
        if init.clocks.len() > spec.sources.len() {
            return Err(Error::Topology(format!(
                "initial condition sets {} clocks but the network has {} sources",
                init.clocks.len(),
                spec.sources.len()
            )));
        }
        for j in &init.jobs {
            if j.class.0 >= nc {
                return Err(Error::Topology(format!("initial job at unknown class {}", j.class.0)));
            }
            if let Some(r) = j.residual {
                if !(r > 0.0) || !r.is_finite() {
                    return Err(Error::param(format!("initial residual must be positive, got {r}")));
                }
            }
        }
        for c in init.clocks.iter().flatten() {
            if !(*c >= 0.0) || !c.is_finite() {
                return Err(Error::param(format!("initial clock must be nonnegative, got {c}")));
            }
        }

        let mut class_local = vec![0u32; nc];
        let mut station_local_groups = Vec::with_capacity(spec.stations.len());
        for st in &spec.stations {
            let mut groups = Vec::with_capacity(st.classes.len());
            for (i, c) in st.classes.iter().enumerate() {
                class_local[c.0] = i as u32;
                groups.push(spec.classes[c.0].group.0 as u32);
            }
            station_local_groups.push(groups);
        }
        let mut group_station: Vec<Option<u32>> = vec![None; ng];
        let mut shared = vec![false; ng];
        for c in &spec.classes {
            let g = c.group.0;
            match group_station[g] {
                None if !shared[g] => group_station[g] = Some(c.station.0 as u32),
                Some(s) if s != c.station.0 as u32 => {
                    group_station[g] = None;
                    shared[g] = true;
                }
                _ => {}
            }
        }
        let ids: Vec<ClassId> = (0..nc).map(ClassId).collect();
        let service_key = key.named("service");
        let service_rng = spec.groups.iter().map(|g| service_key.named(g).stream()).collect();
        let source_key = key.named("source");
        let sources = spec
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| SourceState {
                law: s.law.clone(),
                entry: s.entry.0 as u32,
                rng: source_key.child(i as u64).stream(),
                next_time: 0.0,
            })
            .collect();
        let find_group = |label: &str| spec.groups.iter().position(|g| g == label).map(|g| g as u32);

        let mut sim = Simulation {
            spec: spec.clone(),
            clock: 0.0,
            jobs: Vec::with_capacity(init.jobs.len() + 64),
            free: Vec::new(),
            live: 0,
            stations: spec
                .stations
                .iter()
                .map(|s| Station::new(s.discipline, s.classes.len()))
                .collect(),
            class_station: spec.classes.iter().map(|c| c.station.0 as u32).collect(),
            class_local,
            class_group: spec.classes.iter().map(|c| c.group.0 as u32).collect(),
            class_next: spec.classes.iter().map(|c| c.next.map(|n| n.0 as u32)).collect(),
            class_service: spec.classes.iter().map(|c| c.service.clone()).collect(),
            tail_in_group: ids.iter().map(|&c| spec.downstream_mean_in_group(c)).collect(),
            tail_total: ids.iter().map(|&c| spec.downstream_mean(c)).collect(),
            station_local_counts: spec.stations.iter().map(|s| vec![0; s.classes.len()]).collect(),
            station_local_groups,
            group_station,
            class_count: vec![0; nc],
            group_count: vec![0; ng],
            initial_class_count: vec![0; nc],
            arrivals: vec![0; nc],
            external: vec![0; nc],
            departures: vec![0; nc],
            initial_departures: vec![0; ng],
            group_work: vec![0.0; ng],
            total_work: 0.0,
            work_drain: 0.0,
            sources,
            service_rng,
            events: BinaryHeap::new(),
            seq: 0,
            next_id: 0,
            steps: 0,
            event_cap: DEFAULT_EVENT_CAP,
            records: Vec::new(),
            touched: SmallVec::new(),
            departed: None,
            max_accounting_error: 0.0,
            w3_group: find_group("3"),
            w6_group: find_group("6"),
            quantum: spec.time_quantum,
        };

        for j in &init.jobs {
            let c = j.class.0 as u32;
            let service = match j.residual {
                Some(r) => sim.on_grid(r),
                None => sim.sample_service(c),
            };
            let idx = sim.alloc_job(Job {
                id: 0,
                class: c,
                stamp: f64::NEG_INFINITY,
                residual: service,
                service,
                received: 0.0,
                entry_time: 0.0,
                initial: true,
                preempted: false,
                tag: 0.0,
            });
            sim.initial_class_count[c as usize] += 1;
            sim.total_work += service + sim.tail_total[c as usize];
            sim.place(idx, c, service, true);
        }
        for st in &mut sim.stations {
            st.normalize(&sim.jobs);
        }
        for s in 0..sim.stations.len() {
            sim.reschedule(s);
        }
        sim.touched.clear();
        for i in 0..sim.sources.len() {
            let t = match init.clocks.get(i).copied().flatten() {
                Some(t) => match sim.quantum {
                    Some(q) => (t / q).round() * q,
                    None => t,
                },
                None => {
                    let src = &mut sim.sources[i];
                    let gap = src.law.sample(&mut src.rng);
                    sim.on_grid(gap)
                }
            };
            sim.sources[i].next_time = t;
            sim.push(t, EventKind::Arrival(i as u32));
        }
        Ok(sim)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Total events processed since construction.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_event_cap(&mut self, cap: u64) {
        self.event_cap = cap;
    }

    pub fn event_cap(&self) -> u64 {
        self.event_cap
    }

    pub fn class_count(&self, c: ClassId) -> u64 {
        self.class_count[c.0]
    }

    pub fn group_count(&self, g: GroupId) -> u64 {
        self.group_count[g.0]
    }

    pub fn group_counts(&self) -> &[u64] {
        &self.group_count
    }

    pub fn total_jobs(&self) -> u64 {
        self.live
    }

    pub fn station_len(&self, s: StationId) -> usize {
        self.stations[s.0].n
    }

    pub fn station_counts(&self) -> Vec<u64> {
        self.stations.iter().map(|s| s.n as u64).collect()
    }

    /// `A_k`: arrivals to class `k` (external or routed) over `(0, t]`.
    pub fn arrivals(&self, c: ClassId) -> u64 {
        self.arrivals[c.0]
    }

    /// `D_k`: departures from class `k` over `(0, t]`.
    pub fn departures(&self, c: ClassId) -> u64 {
        self.departures[c.0]
    }

    pub fn initial_count(&self, c: ClassId) -> u64 {
        self.initial_class_count[c.0]
    }

    /// Departures out of group `g` by jobs that were in `g` at time zero.
    pub fn initial_departures(&self, g: GroupId) -> u64 {
        self.initial_departures[g.0]
    }

    /// Residual time to the next arrival of source `i`.
    pub fn residual_clock(&self, i: usize) -> f64 {
        self.sources[i].next_time - self.clock
    }

    /// Largest pre-completion residual seen at any departure.
    pub fn max_accounting_error(&self) -> f64 {
        self.max_accounting_error
    }

    /// Incrementally tracked immediate workload of a group.
    pub fn group_work(&self, g: GroupId) -> f64 {
        self.group_work[g.0].max(0.0)
    }

    /// Incrementally tracked total workload.
    pub fn total_work(&self) -> f64 {
        self.total_work.max(0.0)
    }

    /// `W3`, `W6` (groups labelled "3", "6") and total workload, tracked
    /// incrementally.
    pub fn workloads(&self) -> Workloads {
        Workloads {
            w3: self.w3_group.map_or(0.0, |g| self.group_work[g as usize].max(0.0)),
            w6: self.w6_group.map_or(0.0, |g| self.group_work[g as usize].max(0.0)),
            total: self.total_work(),
        }
    }

    /// Rate at which total workload currently decreases.
    pub fn work_drain_rate(&self) -> f64 {
        self.work_drain
    }

    /// Iterate over live jobs with their current residuals.
    pub fn jobs_with_residuals(&self) -> Vec<(&Job, f64)> {
        let mut out = Vec::with_capacity(self.live as usize);
        for (s, st) in self.stations.iter().enumerate() {
            let dt = self.clock - st.last_sync;
            for (j, rate) in st.allocation(&self.jobs) {
                let job = &self.jobs[j as usize];
                let r = match &st.queue {
                    Queue::Ps { vtime, .. } => job.tag - (vtime + dt / st.n as f64),
                    Queue::Is(_) => job.tag - self.clock,
                    _ => job.residual - rate * dt,
                };
                debug_assert_eq!(self.class_station[job.class as usize] as usize, s);
                out.push((job, r));
            }
        }
        out
    }

    /// Workloads recomputed from every job (O(jobs)); reference for the
    /// incremental values.
    pub fn exact_workloads(&self) -> Workloads {
        let mut w = Workloads::default();
        for (job, r) in self.jobs_with_residuals() {
            let c = job.class as usize;
            let g = self.class_group[c];
            let immediate = r.max(0.0) + self.tail_in_group[c];
            if Some(g) == self.w3_group {
                w.w3 += immediate;
            }
            if Some(g) == self.w6_group {
                w.w6 += immediate;
            }
            w.total += r.max(0.0) + self.tail_total[c];
        }
        w
    }

    /// State descriptor in the form used by the metric. Group labels "1",
    /// "3", "4", "6" give job records; "2" and "5" give counts.
    pub fn snapshot(&self) -> StateSnapshot {
        let label_num = |c: u32| -> Option<u32> { self.spec.groups[self.class_group[c as usize] as usize].parse().ok() };
        let mut snap = StateSnapshot::default();
        for (job, r) in self.jobs_with_residuals() {
            match label_num(job.class) {
                Some(2) => snap.z2 += 1,
                Some(5) => snap.z5 += 1,
                Some(k) => snap.jobs.push(JobRecord {
                    class: k,
                    age: self.clock - job.stamp,
                    residual: r,
                }),
                None => {}
            }
        }
        snap.u1 = self.sources.first().map_or(0.0, |s| s.next_time - self.clock);
        snap.u4 = self.sources.get(1).map_or(0.0, |s| s.next_time - self.clock);
        snap.normalize();
        snap
    }

    /// Service allocation at a station as `(job id, rate)` pairs.
    pub fn allocation(&self, s: StationId) -> Vec<(u64, f64)> {
        self.stations[s.0]
            .allocation(&self.jobs)
            .into_iter()
            .map(|(j, r)| (self.jobs[j as usize].id, r))
            .collect()
    }

    /// Jobs at a station (any order).
    pub fn station_jobs(&self, s: StationId) -> Vec<&Job> {
        self.stations[s.0]
            .members()
            .into_iter()
            .map(|j| &self.jobs[j as usize])
            .collect()
    }

    /// Id of the job served at a single-server station, if any.
    pub fn served_job(&self, s: StationId) -> Option<u64> {
        self.stations[s.0].single_served().map(|j| self.jobs[j as usize].id)
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.peek_valid().map(|e| e.time)
    }

    fn peek_valid(&self) -> Option<Event> {
        // stale completions are skipped lazily by `step`; peek reports the
        // first live event by scanning past stale heads without mutating
        self.events
            .iter()
            .map(|Reverse(e)| *e)
            .filter(|e| self.is_live(e))
            .min()
    }

    fn is_live(&self, e: &Event) -> bool {
        match e.kind {
            EventKind::Arrival(_) => true,
            EventKind::Completion(s, v) => self.stations[s as usize].version == v,
        }
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Reverse(Event { time, seq: self.seq, kind }));
    }

    fn alloc_job(&mut self, mut job: Job) -> JobIdx {
        job.id = self.next_id;
        self.next_id += 1;
        self.live += 1;
        if let Some(i) = self.free.pop() {
            self.jobs[i as usize] = job;
            i
        } else {
            self.jobs.push(job);
            (self.jobs.len() - 1) as JobIdx
        }
    }

    #[inline]
    fn sample_service(&mut self, class: u32) -> f64 {
        let g = self.class_group[class as usize] as usize;
        let x = self.class_service[class as usize].sample(&mut self.service_rng[g]);
        self.on_grid(x)
    }

    #[inline]
    fn on_grid(&self, x: f64) -> f64 {
        match self.quantum {
            Some(q) => snap_to_grid(x, q),
            None => x,
        }
    }

    fn touch(&mut self, s: u32) {
        if !self.touched.iter().any(|t| t.0 == s) {
            let served = match self.stations[s as usize].discipline {
                Discipline::LifoPreemptive => self.stations[s as usize].single_served(),
                _ => None,
            };
            self.touched.push((s, served));
        }
    }

    /// Place a job (already carrying its class residual) at class `c`.
    fn enter_class(&mut self, j: JobIdx, c: u32, service: f64) {
        self.place(j, c, service, false);
    }

    fn place(&mut self, j: JobIdx, c: u32, service: f64, bulk: bool) {
        let ci = c as usize;
        let s = self.class_station[ci];
        self.touch(s);
        let local = self.class_local[ci] as usize;
        let g = self.class_group[ci] as usize;
        self.class_count[ci] += 1;
        self.group_count[g] += 1;
        self.station_local_counts[s as usize][local] += 1;
        self.group_work[g] += service + self.tail_in_group[ci];
        let now = self.clock;
        let st = &mut self.stations[s as usize];
        st.sync(now, &mut self.jobs);
        if bulk {
            st.push_unsorted(j, local, now, &mut self.jobs);
        } else {
            st.insert(j, local, now, &mut self.jobs);
        }
    }

    fn advance_to(&mut self, t: f64) {
        let dt = t - self.clock;
        if dt > 0.0 {
            for st in &self.stations {
                for &(g, r) in &st.drains {
                    self.group_work[g as usize] -= r * dt;
                }
            }
            self.total_work -= self.work_drain * dt;
            self.clock = t;
        }
    }

    fn reschedule(&mut self, s: usize) {
        let now = self.clock;
        let st = &mut self.stations[s];
        st.sync(now, &mut self.jobs);
        let old_busy = st.busy_rate;
        st.recompute_drains(
            &self.jobs,
            &self.class_group,
            &self.station_local_counts[s],
            &self.station_local_groups[s],
        );
        self.work_drain += st.busy_rate - old_busy;
        st.version += 1;
        st.next_job = None;
        if let Some((t, j)) = st.next_completion(now, &self.jobs) {
            st.next_job = Some(j);
            let v = st.version;
            self.push(t, EventKind::Completion(s as u32, v));
        }
    }

    fn emit(&mut self, kind: RecordKind, class: u32, job_id: u64) {
        self.records.push(EventRecord {
            time: self.clock,
            kind,
            class: ClassId(class as usize),
            job_id,
        });
    }

    fn external_arrival(&mut self, src: usize) {
        let entry = self.sources[src].entry;
        let service = self.sample_service(entry);
        let now = self.clock;
        let idx = self.alloc_job(Job {
            id: 0,
            class: entry,
            stamp: now,
            residual: service,
            service,
            received: 0.0,
            entry_time: now,
            initial: false,
            preempted: false,
            tag: 0.0,
        });
        let id = self.jobs[idx as usize].id;
        self.arrivals[entry as usize] += 1;
        self.external[entry as usize] += 1;
        self.total_work += service + self.tail_total[entry as usize];
        self.emit(RecordKind::Arrival, entry, id);
        self.enter_class(idx, entry, service);

        let s = &mut self.sources[src];
        let gap = s.law.sample(&mut s.rng);
        let gap = self.on_grid(gap);
        let s = &mut self.sources[src];
        s.next_time = now + gap;
        let t = s.next_time;
        self.push(t, EventKind::Arrival(src as u32));
    }

    fn completion(&mut self, s: usize) {
        self.touch(s as u32);
        let now = self.clock;
        let st = &mut self.stations[s];
        st.sync(now, &mut self.jobs);
        let j = st.next_job.expect("live completion has a job");
        let c = self.jobs[j as usize].class as usize;
        let local = self.class_local[c] as usize;
        let (j, residual) = self.stations[s].remove_next(local, now, &mut self.jobs);
        if residual.abs() > self.max_accounting_error {
            self.max_accounting_error = residual.abs();
        }
        let g = self.class_group[c] as usize;
        let job = &mut self.jobs[j as usize];
        job.received += residual;
        job.residual = 0.0;
        let id = job.id;
        self.class_count[c] -= 1;
        self.group_count[g] -= 1;
        self.station_local_counts[s][local] -= 1;
        self.departures[c] += 1;
        self.group_work[g] -= self.tail_in_group[c];
        if self.group_count[g] == 0 {
            self.group_work[g] = 0.0;
        }
        self.total_work -= self.tail_total[c];
        self.emit(RecordKind::Departure, c as u32, id);
        self.departed = Some(j);

        match self.class_next[c] {
            Some(next) => {
                let ng = self.class_group[next as usize] as usize;
                if self.jobs[j as usize].initial && ng != g {
                    self.initial_departures[g] += 1;
                    self.jobs[j as usize].initial = false;
                }
                let service = self.sample_service(next);
                let job = &mut self.jobs[j as usize];
                job.class = next;
                job.stamp = now;
                job.residual = service;
                job.service = service;
                job.received = 0.0;
                job.preempted = false;
                self.arrivals[next as usize] += 1;
                self.total_work += service + self.tail_total[next as usize];
                self.emit(RecordKind::Arrival, next, id);
                self.enter_class(j, next, service);
            }
            None => {
                if self.jobs[j as usize].initial {
                    self.initial_departures[g] += 1;
                }
                self.free.push(j);
                self.live -= 1;
                if self.live == 0 {
                    self.total_work = 0.0;
                }
            }
        }
    }

    /// Process one event. Returns `false` when the event queue is empty.
    pub fn step(&mut self) -> bool {
        let ev = loop {
            match self.events.pop() {
                None => return false,
                Some(Reverse(e)) if self.is_live(&e) => break e,
                Some(_) => continue,
            }
        };
        self.advance_to(ev.time);
        self.records.clear();
        self.touched.clear();
        self.departed = None;
        match ev.kind {
            EventKind::Arrival(src) => self.external_arrival(src as usize),
            EventKind::Completion(s, _) => self.completion(s as usize),
        }
        let touched = std::mem::take(&mut self.touched);
        for &(s, _) in &touched {
            self.reschedule(s as usize);
        }
        for &(s, before) in &touched {
            let after = self.stations[s as usize].single_served();
            if before == after || self.stations[s as usize].discipline != Discipline::LifoPreemptive {
                continue;
            }
            if let Some(b) = before {
                if self.departed != Some(b) {
                    let job = &mut self.jobs[b as usize];
                    job.preempted = true;
                    let (class, id) = (job.class, job.id);
                    self.emit(RecordKind::Preempt, class, id);
                }
            }
            if let Some(a) = after {
                if self.jobs[a as usize].preempted {
                    let job = &mut self.jobs[a as usize];
                    job.preempted = false;
                    let (class, id) = (job.class, job.id);
                    self.emit(RecordKind::Resume, class, id);
                }
            }
        }
        self.touched = touched;
        self.steps += 1;
        true
    }

    /// Records emitted by the most recent step.
    pub fn last_records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Run until `stop` holds (checked before the first event and after
    /// every event), the horizon passes, or the hard event cap is reached.
    pub fn run<O: Observer>(&mut self, stop: &StopRule, obs: &mut O) -> RunOutcome {
        obs.on_start(self);
        let start_steps = self.steps;
        let horizon = stop.horizon();
        let done = |sim: &Simulation| stop.satisfied(sim, sim.steps - start_steps);
        if done(self) {
            return RunOutcome {
                reason: StopReason::Satisfied,
                steps: 0,
                time: self.clock,
            };
        }
        loop {
            if self.steps - start_steps >= self.event_cap {
                return self.outcome(StopReason::EventCap, start_steps);
            }
            let next = self.next_live_time();
            if next.is_some() || horizon.is_some() {
                while let Some(g) = obs.next_grid() {
                    let before_next = next.is_none_or(|t| g < t);
                    if !before_next || horizon.is_some_and(|h| g > h) {
                        break;
                    }
                    self.advance_to(g);
                    obs.on_grid(self);
                }
            }
            match (next, horizon) {
                (None, None) => return self.outcome(StopReason::Exhausted, start_steps),
                (None, Some(h)) => {
                    self.advance_to(h);
                    return self.outcome(StopReason::Horizon, start_steps);
                }
                (Some(t), Some(h)) if t > h => {
                    self.advance_to(h);
                    return self.outcome(StopReason::Horizon, start_steps);
                }
                _ => {}
            }
            self.step();
            for r in &self.records {
                obs.on_record(r);
            }
            obs.on_step(self);
            if done(self) {
                return self.outcome(StopReason::Satisfied, start_steps);
            }
        }
    }

    pub(crate) fn next_live_time(&mut self) -> Option<f64> {
        while let Some(Reverse(e)) = self.events.peek() {
            if self.is_live(e) {
                return Some(e.time);
            }
            self.events.pop();
        }
        None
    }

    pub(crate) fn outcome_now(&self) -> RunOutcome {
        RunOutcome {
            reason: StopReason::Satisfied,
            steps: self.steps,
            time: self.clock,
        }
    }

    fn outcome(&self, reason: StopReason, start_steps: u64) -> RunOutcome {
        RunOutcome {
            reason,
            steps: self.steps - start_steps,
            time: self.clock,
        }
    }

    /// Check the structural invariants of the current state. Returns a
    /// description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let tol = 1e-9;
        for (s, st) in self.stations.iter().enumerate() {
            let alloc = st.allocation(&self.jobs);
            if alloc.len() != st.n {
                return Err(format!("station {s}: {} jobs listed, n = {}", alloc.len(), st.n));
            }
            if st.n == 0 {
                continue;
            }
            match st.discipline {
                Discipline::Is => {
                    if alloc.iter().any(|(_, r)| (r - 1.0).abs() > 1e-12) {
                        return Err(format!("station {s}: IS job not served at rate 1"));
                    }
                }
                _ => {
                    let total: f64 = alloc.iter().map(|(_, r)| r).sum();
                    if (total - 1.0).abs() > 1e-12 {
                        return Err(format!("station {s}: allocation sums to {total}"));
                    }
                    if alloc.iter().any(|(_, r)| *r < 0.0 || *r > 1.0) {
                        return Err(format!("station {s}: allocation outside [0, 1]"));
                    }
                }
            }
            let served: Vec<JobIdx> = alloc.iter().filter(|(_, r)| *r > 0.0).map(|(j, _)| *j).collect();
            match st.discipline {
                Discipline::LifoPreemptive => {
                    let best = alloc
                        .iter()
                        .map(|(j, _)| *j)
                        .max_by(|a, b| key_cmp(self.jobs[*a as usize].lifo_key(), self.jobs[*b as usize].lifo_key()))
                        .unwrap();
                    if served != [best] {
                        return Err(format!("station {s}: LIFO serves {served:?}, expected {best}"));
                    }
                }
                Discipline::Fifo => {
                    let best = alloc
                        .iter()
                        .map(|(j, _)| *j)
                        .min_by(|a, b| key_cmp(self.jobs[*a as usize].fifo_key(), self.jobs[*b as usize].fifo_key()))
                        .unwrap();
                    if served != [best] {
                        return Err(format!("station {s}: FIFO serves {served:?}, expected {best}"));
                    }
                }
                Discipline::Hlpps => {
                    for &j in &served {
                        let job = &self.jobs[j as usize];
                        let earlier = alloc.iter().any(|(o, _)| {
                            let other = &self.jobs[*o as usize];
                            other.class == job.class && key_cmp(other.fifo_key(), job.fifo_key()).is_lt()
                        });
                        if earlier {
                            return Err(format!("station {s}: HLPPS serves a non-head job"));
                        }
                    }
                }
                _ => {}
            }
            for (j, _) in &alloc {
                let job = &self.jobs[*j as usize];
                let r = st.residual_of(job, st.last_sync);
                if r < -tol || r > job.service + tol {
                    return Err(format!("job {}: residual {r} outside [0, {}]", job.id, job.service));
                }
            }
        }
        for c in 0..self.class_count.len() {
            let z = self.initial_class_count[c] + self.arrivals[c] - self.departures[c];
            if z != self.class_count[c] {
                return Err(format!("class {c}: Z = {} but Z(0) + A - D = {z}", self.class_count[c]));
            }
        }
        for n in 0..self.class_next.len() {
            let routed: u64 = (0..self.class_next.len())
                .filter(|&k| self.class_next[k] == Some(n as u32))
                .map(|k| self.departures[k])
                .sum();
            if self.arrivals[n] != routed + self.external[n] {
                return Err(format!("class {n}: flow conservation broken"));
            }
        }
        // the heap minimum bounds every pending event, stale or live
        if let Some(Reverse(e)) = self.events.peek() {
            if e.time < self.clock {
                return Err(format!("pending event at {} before clock {}", e.time, self.clock));
            }
        }
        if self.max_accounting_error > tol {
            return Err(format!("service accounting error {}", self.max_accounting_error));
        }
        Ok(())
    }

    /// Station holding all classes of a group, if there is a single one.
    pub fn group_station(&self, g: GroupId) -> Option<StationId> {
        self.group_station[g.0].map(|s| StationId(s as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fig1, ClassDef, Source, StationDef};

    /// One station holding classes "a" and "b", both leaving after service,
    /// with a source that stays quiet until `quiet` unless a clock is given.
    fn one_station(d: Discipline, service_a: f64, quiet: f64) -> NetworkSpec {
        let class = |label: &str, group: usize| ClassDef {
            label: label.into(),
            station: StationId(0),
            group: GroupId(group),
            service: ServiceLaw::Deterministic { mean: service_a },
            next: None,
        };
        NetworkSpec {
            name: "one".into(),
            params: None,
            groups: vec!["a".into(), "b".into()],
            classes: vec![class("a", 0), class("b", 1)],
            stations: vec![StationDef {
                label: "S".into(),
                discipline: d,
                classes: vec![ClassId(0), ClassId(1)],
            }],
            sources: vec![Source {
                label: "in".into(),
                entry: ClassId(0),
                law: ArrivalLaw::Deterministic { value: quiet },
            }],
            time_quantum: None,
        }
    }

    /// `(time, job id)` of every departure up to `horizon`.
    fn departures(spec: &NetworkSpec, init: &InitialCondition, horizon: f64) -> Vec<(f64, u64)> {
        let mut sim = Simulation::new(spec, init, 1).unwrap();
        let mut out = Vec::new();
        while sim.next_event_time().is_some_and(|t| t <= horizon) {
            sim.step();
            sim.check_invariants().unwrap();
            for r in sim.last_records() {
                if r.kind == RecordKind::Departure {
                    out.push((r.time, r.job_id));
                }
            }
        }
        out
    }

    fn two_jobs() -> InitialCondition {
        InitialCondition::empty().with_job(ClassId(0), 1.0).with_job(ClassId(0), 2.0)
    }

    #[test]
    fn lifo_serves_initial_jobs_in_index_order() {
        let spec = one_station(Discipline::LifoPreemptive, 1.0, 1e9);
        assert_eq!(departures(&spec, &two_jobs(), 10.0), vec![(1.0, 0), (3.0, 1)]);
    }

    #[test]
    fn lifo_serves_latest_arrival_first() {
        let spec = one_station(Discipline::LifoPreemptive, 0.5, 1.0);
        let init = InitialCondition::empty().with_job(ClassId(0), 10.0).with_clock(0, 1.0);
        // arrivals at 1, 2, 3, ... each take 0.5 and preempt the initial job
        let deps = departures(&spec, &init, 3.9);
        assert_eq!(deps, vec![(1.5, 1), (2.5, 2), (3.5, 3)]);
    }

    #[test]
    fn fifo_serves_earliest_job_first() {
        let spec = one_station(Discipline::Fifo, 1.0, 1e9);
        assert_eq!(departures(&spec, &two_jobs(), 10.0), vec![(1.0, 0), (3.0, 1)]);
    }

    #[test]
    fn ps_shares_equally() {
        let spec = one_station(Discipline::Ps, 1.0, 1e9);
        let sim = Simulation::new(&spec, &two_jobs(), 1).unwrap();
        assert_eq!(sim.allocation(StationId(0)).iter().map(|a| a.1).collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert_eq!(departures(&spec, &two_jobs(), 10.0), vec![(2.0, 0), (3.0, 1)]);
    }

    #[test]
    fn hlpps_shares_among_class_heads_by_class_size() {
        let spec = one_station(Discipline::Hlpps, 1.0, 1e9);
        let init = InitialCondition::empty()
            .with_job(ClassId(0), 1.0)
            .with_job(ClassId(0), 1.0)
            .with_job(ClassId(1), 3.0);
        let sim = Simulation::new(&spec, &init, 1).unwrap();
        let mut alloc = sim.allocation(StationId(0));
        alloc.sort_by_key(|a| a.0);
        assert_eq!(alloc, vec![(0, 2.0 / 3.0), (1, 0.0), (2, 1.0 / 3.0)]);
        let deps = departures(&spec, &init, 10.0);
        let want = [(1.5, 0), (3.5, 1), (5.0, 2)];
        assert_eq!(deps.len(), 3);
        for ((t, id), (wt, wid)) in deps.iter().zip(want) {
            assert_eq!(*id, wid);
            assert!((t - wt).abs() < 1e-12, "{deps:?}");
        }
    }

    #[test]
    fn infinite_server_serves_everyone_at_unit_rate() {
        let spec = one_station(Discipline::Is, 1.0, 1e9);
        assert_eq!(departures(&spec, &two_jobs(), 10.0), vec![(1.0, 0), (2.0, 1)]);
    }

    #[test]
    fn preemption_depends_on_discipline() {
        let init = InitialCondition::empty().with_job(ClassId(0), 2.0).with_clock(0, 1.0);
        let pre = one_station(Discipline::LifoPreemptive, 1.0, 1e9);
        assert_eq!(departures(&pre, &init, 10.0), vec![(2.0, 1), (3.0, 0)]);
        let non = one_station(Discipline::LifoNonpreemptive, 1.0, 1e9);
        assert_eq!(departures(&non, &init, 10.0), vec![(2.0, 0), (3.0, 1)]);
    }

    #[test]
    fn preempt_and_resume_records_pair_up() {
        let spec = one_station(Discipline::LifoPreemptive, 1.0, 1e9);
        let init = InitialCondition::empty().with_job(ClassId(0), 2.0).with_clock(0, 1.0);
        let mut sim = Simulation::new(&spec, &init, 1).unwrap();
        let mut kinds = Vec::new();
        while sim.step() && sim.clock() <= 3.0 {
            kinds.extend(sim.last_records().iter().map(|r| (r.kind, r.job_id)));
        }
        assert!(kinds.contains(&(RecordKind::Preempt, 0)));
        assert!(kinds.contains(&(RecordKind::Resume, 0)));
    }

    #[test]
    fn initial_jobs_are_counted() {
        let spec = build_fig1(2000.0, Some(0.1), false).unwrap();
        let init = InitialCondition::empty().with_jobs(ClassId(1), 500);
        let sim = Simulation::new(&spec, &init, 3).unwrap();
        assert_eq!(sim.class_count(ClassId(1)), 500);
        assert_eq!(sim.total_jobs(), 500);
        assert_eq!(sim.initial_count(ClassId(1)), 500);
        sim.check_invariants().unwrap();
    }

    #[test]
    fn same_seed_same_path() {
        let spec = build_fig1(100.0, Some(0.3), false).unwrap();
        let init = InitialCondition::empty().with_jobs(ClassId(1), 50);
        let run = |seed| {
            let mut sim = Simulation::new(&spec, &init, seed).unwrap();
            sim.run(&StopRule::MaxEvents(20_000), &mut NoObserver);
            (sim.clock(), sim.group_counts().to_vec())
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn incremental_workloads_match_recomputed() {
        let spec = build_fig1(100.0, Some(0.3), false).unwrap();
        let init = InitialCondition::empty().with_jobs(ClassId(1), 200);
        let mut sim = Simulation::new(&spec, &init, 9).unwrap();
        for _ in 0..200 {
            sim.run(&StopRule::MaxEvents(500), &mut NoObserver);
            let (a, b) = (sim.workloads(), sim.exact_workloads());
            let scale = 1.0 + b.total;
            assert!((a.total - b.total).abs() <= 1e-9 * scale, "{a:?} vs {b:?}");
            assert!((a.w3 - b.w3).abs() <= 1e-9 * scale, "{a:?} vs {b:?}");
            assert!((a.w6 - b.w6).abs() <= 1e-9 * scale, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn event_cap_truncates() {
        let spec = build_fig1(100.0, Some(0.3), false).unwrap();
        let mut sim = Simulation::new(&spec, &InitialCondition::empty(), 1).unwrap();
        sim.set_event_cap(100);
        let out = sim.run(&StopRule::Horizon(1e12), &mut NoObserver);
        assert_eq!(out.reason, StopReason::EventCap);
        assert!(out.truncated());
        assert_eq!(out.steps, 100);
    }

    #[test]
    fn horizon_advances_clock() {
        let spec = one_station(Discipline::LifoPreemptive, 1.0, 1e9);
        let mut sim = Simulation::new(&spec, &two_jobs(), 1).unwrap();
        let out = sim.run(&StopRule::Horizon(2.5), &mut NoObserver);
        assert_eq!(out.reason, StopReason::Horizon);
        assert_eq!(sim.clock(), 2.5);
        assert_eq!(sim.total_jobs(), 1);
    }

    #[test]
    fn quantum_puts_durations_on_grid() {
        let q = 1.0 / 1024.0;
        let spec = build_fig1(100.0, Some(0.3), false).unwrap().on_time_grid(q).unwrap();
        let mut sim = Simulation::new(&spec, &InitialCondition::empty().with_jobs(ClassId(1), 20), 2).unwrap();
        for _ in 0..5000 {
            sim.step();
            assert_eq!((sim.clock() / q).fract(), 0.0);
        }
    }

    #[test]
    fn bad_initial_conditions_are_rejected() {
        let spec = one_station(Discipline::Fifo, 1.0, 1e9);
        assert!(Simulation::new(&spec, &InitialCondition::empty().with_job(ClassId(5), 1.0), 1).is_err());
        assert!(Simulation::new(&spec, &InitialCondition::empty().with_job(ClassId(0), -1.0), 1).is_err());
        assert!(Simulation::new(&spec, &InitialCondition::empty().with_clock(3, 1.0), 1).is_err());
    }
}
