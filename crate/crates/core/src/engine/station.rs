//! Per-station job sets and service allocation for each discipline.
//!
//! Residuals of jobs in service are brought up to date lazily by
//! [`Station::sync`]; every mutation of a station is preceded by a sync at
//! the current clock.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use smallvec::SmallVec;

use crate::model::Discipline;

pub(crate) type JobIdx = u32;

#[derive(Debug, Clone)]
pub struct Job {
    pub id: u64,
    pub class: u32,
    /// Time the job entered its current class; `-inf` for jobs present at
    /// time zero that have not moved.
    pub stamp: f64,
    pub residual: f64,
    pub service: f64,
    pub received: f64,
    pub entry_time: f64,
    /// Still in the group it occupied at time zero.
    pub initial: bool,
    pub(crate) preempted: bool,
    /// PS: virtual finish tag. IS: absolute finish time.
    pub(crate) tag: f64,
}

impl Job {
    /// Ordering key for the LIFO rule: latest stamp wins, ties go to the
    /// larger id; among jobs present at time zero the smallest id wins.
    #[inline]
    pub fn lifo_key(&self) -> (f64, i64) {
        if self.stamp == f64::NEG_INFINITY {
            (self.stamp, -(self.id as i64))
        } else {
            (self.stamp, self.id as i64)
        }
    }

    /// Arrival order at the class.
    #[inline]
    pub fn fifo_key(&self) -> (f64, i64) {
        (self.stamp, self.id as i64)
    }
}

#[inline]
pub(crate) fn key_cmp(a: (f64, i64), b: (f64, i64)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tagged(pub f64, pub u64, pub JobIdx);

impl Eq for Tagged {}

impl PartialOrd for Tagged {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Tagged {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Queue {
    /// Sorted ascending by LIFO key; the last job is served.
    Lifo(Vec<JobIdx>),
    /// `current` runs to completion; `waiting` sorted ascending by LIFO key.
    LifoNonpreemptive { current: Option<JobIdx>, waiting: Vec<JobIdx> },
    /// Sorted ascending by arrival order; the front job is served.
    Fifo(VecDeque<JobIdx>),
    /// Egalitarian sharing through a virtual clock advancing at `1/n`.
    Ps { vtime: f64, heap: BinaryHeap<Reverse<Tagged>> },
    /// One arrival-ordered queue per local class; heads share the server in
    /// proportion to their class counts.
    Hlpps(Vec<VecDeque<JobIdx>>),
    Is(BinaryHeap<Reverse<Tagged>>),
}

#[derive(Debug, Clone)]
pub(crate) struct Station {
    pub discipline: Discipline,
    pub queue: Queue,
    pub n: usize,
    pub last_sync: f64,
    pub version: u64,
    pub next_job: Option<JobIdx>,
    /// Rate at which the server drains each observable group.
    pub drains: SmallVec<[(u32, f64); 2]>,
    /// Total service rate delivered (1 when busy, `n` for IS).
    pub busy_rate: f64,
}

fn insert_sorted(v: &mut Vec<JobIdx>, j: JobIdx, jobs: &[Job], key: fn(&Job) -> (f64, i64)) {
    let k = key(&jobs[j as usize]);
    let mut pos = v.len();
    while pos > 0 && key_cmp(key(&jobs[v[pos - 1] as usize]), k) == Ordering::Greater {
        pos -= 1;
    }
    v.insert(pos, j);
}

fn insert_sorted_deque(v: &mut VecDeque<JobIdx>, j: JobIdx, jobs: &[Job]) {
    let k = jobs[j as usize].fifo_key();
    let mut pos = v.len();
    while pos > 0 && key_cmp(jobs[v[pos - 1] as usize].fifo_key(), k) == Ordering::Greater {
        pos -= 1;
    }
    v.insert(pos, j);
}

impl Station {
    pub fn new(discipline: Discipline, local_classes: usize) -> Self {
        let queue = match discipline {
            Discipline::LifoPreemptive => Queue::Lifo(Vec::new()),
            Discipline::LifoNonpreemptive => Queue::LifoNonpreemptive {
                current: None,
                waiting: Vec::new(),
            },
            Discipline::Fifo => Queue::Fifo(VecDeque::new()),
            Discipline::Ps => Queue::Ps {
                vtime: 0.0,
                heap: BinaryHeap::new(),
            },
            Discipline::Hlpps => Queue::Hlpps(vec![VecDeque::new(); local_classes]),
            Discipline::Is => Queue::Is(BinaryHeap::new()),
        };
        Station {
            discipline,
            queue,
            n: 0,
            last_sync: 0.0,
            version: 0,
            next_job: None,
            drains: SmallVec::new(),
            busy_rate: 0.0,
        }
    }

    /// The single job in service for LIFO/FIFO-type stations.
    pub fn single_served(&self) -> Option<JobIdx> {
        match &self.queue {
            Queue::Lifo(v) => v.last().copied(),
            Queue::LifoNonpreemptive { current, .. } => *current,
            Queue::Fifo(v) => v.front().copied(),
            _ => None,
        }
    }

    /// Advance service accounting to `now`.
    pub fn sync(&mut self, now: f64, jobs: &mut [Job]) {
        let dt = now - self.last_sync;
        self.last_sync = now;
        if dt <= 0.0 || self.n == 0 {
            return;
        }
        match &mut self.queue {
            Queue::Lifo(_) | Queue::LifoNonpreemptive { .. } | Queue::Fifo(_) => {
                if let Some(j) = self.single_served() {
                    let job = &mut jobs[j as usize];
                    job.residual -= dt;
                    job.received += dt;
                }
            }
            Queue::Hlpps(classes) => {
                let n = self.n as f64;
                for q in classes.iter() {
                    if let Some(&h) = q.front() {
                        let r = dt * q.len() as f64 / n;
                        let job = &mut jobs[h as usize];
                        job.residual -= r;
                        job.received += r;
                    }
                }
            }
            Queue::Ps { vtime, .. } => {
                *vtime += dt / self.n as f64;
            }
            Queue::Is(_) => {}
        }
    }

    /// Current residual of a job at this station (station synced).
    pub fn residual_of(&self, job: &Job, now: f64) -> f64 {
        match &self.queue {
            Queue::Ps { vtime, .. } => job.tag - vtime,
            Queue::Is(_) => job.tag - now,
            _ => job.residual,
        }
    }

    /// Insert a job; returns the previously served job if it was displaced
    /// (preemptive LIFO only).
    pub fn insert(&mut self, j: JobIdx, local_class: usize, now: f64, jobs: &mut [Job]) -> Option<JobIdx> {
        self.n += 1;
        match &mut self.queue {
            Queue::Lifo(v) => {
                let before = v.last().copied();
                insert_sorted(v, j, jobs, Job::lifo_key);
                let after = v.last().copied();
                if before.is_some() && before != after {
                    return before;
                }
            }
            Queue::LifoNonpreemptive { current, waiting } => {
                if current.is_none() {
                    *current = Some(j);
                } else {
                    insert_sorted(waiting, j, jobs, Job::lifo_key);
                }
            }
            Queue::Fifo(v) => insert_sorted_deque(v, j, jobs),
            Queue::Hlpps(classes) => insert_sorted_deque(&mut classes[local_class], j, jobs),
            Queue::Ps { vtime, heap } => {
                let job = &mut jobs[j as usize];
                job.tag = *vtime + job.residual;
                heap.push(Reverse(Tagged(job.tag, job.id, j)));
            }
            Queue::Is(heap) => {
                let job = &mut jobs[j as usize];
                job.tag = now + job.residual;
                heap.push(Reverse(Tagged(job.tag, job.id, j)));
            }
        }
        None
    }

    /// Add a job without ordering; [`Station::normalize`] must follow.
    pub fn push_unsorted(&mut self, j: JobIdx, local_class: usize, now: f64, jobs: &mut [Job]) {
        match &mut self.queue {
            Queue::Lifo(v) => {
                self.n += 1;
                v.push(j);
            }
            Queue::LifoNonpreemptive { waiting, .. } => {
                self.n += 1;
                waiting.push(j);
            }
            Queue::Fifo(v) => {
                self.n += 1;
                v.push_back(j);
            }
            Queue::Hlpps(classes) => {
                self.n += 1;
                classes[local_class].push_back(j);
            }
            Queue::Ps { .. } | Queue::Is(_) => {
                self.insert(j, local_class, now, jobs);
            }
        }
    }

    /// Restore queue order after bulk insertion.
    pub fn normalize(&mut self, jobs: &[Job]) {
        let lifo = |a: &JobIdx, b: &JobIdx| key_cmp(jobs[*a as usize].lifo_key(), jobs[*b as usize].lifo_key());
        let fifo = |a: &JobIdx, b: &JobIdx| key_cmp(jobs[*a as usize].fifo_key(), jobs[*b as usize].fifo_key());
        match &mut self.queue {
            Queue::Lifo(v) => v.sort_by(lifo),
            Queue::LifoNonpreemptive { current, waiting } => {
                waiting.sort_by(lifo);
                if current.is_none() {
                    *current = waiting.pop();
                }
            }
            Queue::Fifo(v) => v.make_contiguous().sort_by(fifo),
            Queue::Hlpps(classes) => {
                for q in classes {
                    q.make_contiguous().sort_by(fifo);
                }
            }
            Queue::Ps { .. } | Queue::Is(_) => {}
        }
    }

    /// Remove the job that is due to complete (`next_job`). Returns its
    /// residual just before removal.
    pub fn remove_next(&mut self, local_class: usize, now: f64, jobs: &mut [Job]) -> (JobIdx, f64) {
        let j = self.next_job.expect("completion without a scheduled job");
        let residual = self.residual_of(&jobs[j as usize], now);
        match &mut self.queue {
            Queue::Lifo(v) => {
                let top = v.pop();
                debug_assert_eq!(top, Some(j));
            }
            Queue::LifoNonpreemptive { current, waiting } => {
                debug_assert_eq!(*current, Some(j));
                *current = waiting.pop();
            }
            Queue::Fifo(v) => {
                let front = v.pop_front();
                debug_assert_eq!(front, Some(j));
            }
            Queue::Hlpps(classes) => {
                let front = classes[local_class].pop_front();
                debug_assert_eq!(front, Some(j));
            }
            Queue::Ps { vtime, heap } => {
                let Reverse(Tagged(_, _, top)) = heap.pop().expect("nonempty PS heap");
                debug_assert_eq!(top, j);
                if heap.is_empty() {
                    *vtime = 0.0;
                }
            }
            Queue::Is(heap) => {
                let Reverse(Tagged(_, _, top)) = heap.pop().expect("nonempty IS heap");
                debug_assert_eq!(top, j);
            }
        }
        self.n -= 1;
        self.next_job = None;
        (j, residual)
    }

    /// Next completion `(time, job)` from the synced state.
    pub fn next_completion(&self, now: f64, jobs: &[Job]) -> Option<(f64, JobIdx)> {
        if self.n == 0 {
            return None;
        }
        match &self.queue {
            Queue::Lifo(_) | Queue::LifoNonpreemptive { .. } | Queue::Fifo(_) => self
                .single_served()
                .map(|j| (now + jobs[j as usize].residual.max(0.0), j)),
            Queue::Hlpps(classes) => {
                let n = self.n as f64;
                let mut best: Option<(f64, (f64, i64), JobIdx)> = None;
                for q in classes {
                    if let Some(&h) = q.front() {
                        let job = &jobs[h as usize];
                        let dt = job.residual.max(0.0) * n / q.len() as f64;
                        let cand = (dt, job.fifo_key(), h);
                        best = match best {
                            Some(b) if b.0 < cand.0 || (b.0 == cand.0 && key_cmp(b.1, cand.1).is_le()) => Some(b),
                            _ => Some(cand),
                        };
                    }
                }
                best.map(|(dt, _, j)| (now + dt, j))
            }
            Queue::Ps { vtime, heap } => heap.peek().map(|Reverse(Tagged(tag, _, j))| {
                let dt = (tag - vtime).max(0.0) * self.n as f64;
                (now + dt, *j)
            }),
            Queue::Is(heap) => heap.peek().map(|Reverse(Tagged(tag, _, j))| (tag.max(now), *j)),
        }
    }

    /// Recompute group drain rates; `group_of(job)` maps a job to its group
    /// and `class_counts(local)` gives the number of jobs per local class.
    pub fn recompute_drains(&mut self, jobs: &[Job], group_of_class: &[u32], local_counts: &[u64], local_groups: &[u32]) {
        self.drains.clear();
        if self.n == 0 {
            self.busy_rate = 0.0;
            return;
        }
        let n = self.n as f64;
        let add = |g: u32, r: f64, drains: &mut SmallVec<[(u32, f64); 2]>| {
            if let Some(e) = drains.iter_mut().find(|e| e.0 == g) {
                e.1 += r;
            } else {
                drains.push((g, r));
            }
        };
        match &self.queue {
            Queue::Lifo(_) | Queue::LifoNonpreemptive { .. } | Queue::Fifo(_) => {
                let j = self.single_served().expect("busy station serves a job");
                add(group_of_class[jobs[j as usize].class as usize], 1.0, &mut self.drains);
                self.busy_rate = 1.0;
            }
            Queue::Hlpps(_) | Queue::Ps { .. } => {
                for (local, &cnt) in local_counts.iter().enumerate() {
                    if cnt > 0 {
                        add(local_groups[local], cnt as f64 / n, &mut self.drains);
                    }
                }
                self.busy_rate = 1.0;
            }
            Queue::Is(_) => {
                for (local, &cnt) in local_counts.iter().enumerate() {
                    if cnt > 0 {
                        add(local_groups[local], cnt as f64, &mut self.drains);
                    }
                }
                self.busy_rate = n;
            }
        }
    }

    /// Jobs at the station with their service rates.
    pub fn allocation(&self, jobs: &[Job]) -> Vec<(JobIdx, f64)> {
        let n = self.n as f64;
        match &self.queue {
            Queue::Lifo(v) => v.iter().map(|&j| (j, if Some(&j) == v.last() { 1.0 } else { 0.0 })).collect(),
            Queue::LifoNonpreemptive { current, waiting } => current
                .iter()
                .map(|&j| (j, 1.0))
                .chain(waiting.iter().map(|&j| (j, 0.0)))
                .collect(),
            Queue::Fifo(v) => v
                .iter()
                .enumerate()
                .map(|(i, &j)| (j, if i == 0 { 1.0 } else { 0.0 }))
                .collect(),
            Queue::Hlpps(classes) => classes
                .iter()
                .flat_map(|q| {
                    let share = q.len() as f64 / n;
                    q.iter().enumerate().map(move |(i, &j)| (j, if i == 0 { share } else { 0.0 }))
                })
                .collect(),
            Queue::Ps { heap, .. } => heap.iter().map(|Reverse(t)| (t.2, 1.0 / n)).collect(),
            Queue::Is(heap) => {
                let _ = jobs;
                heap.iter().map(|Reverse(t)| (t.2, 1.0)).collect()
            }
        }
    }

    pub fn members(&self) -> Vec<JobIdx> {
        self.allocation(&[]).into_iter().map(|(j, _)| j).collect()
    }
}
