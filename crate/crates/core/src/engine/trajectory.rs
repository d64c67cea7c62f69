use std::io::Write;

use serde::{Deserialize, Serialize};

use super::sim::{EventRecord, Observer, RunOutcome, Simulation, StopRule, Workloads};
use crate::error::Result;
use crate::model::{ClassId, GroupId, NetworkSpec};

/// When the recorder samples the observable series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesMode {
    None,
    /// After every event.
    Every,
    /// On a regular grid with the given spacing.
    Grid(f64),
    /// After every event and on a grid.
    EveryAndGrid(f64),
}

/// Event log and sampled observables of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub groups: Vec<String>,
    pub class_labels: Vec<String>,
    pub class_groups: Vec<usize>,
    pub events: Vec<EventRecord>,
    pub times: Vec<f64>,
    /// Row-major group counts, `groups.len()` per sample.
    pub counts: Vec<u64>,
    pub work: Vec<Workloads>,
    pub outcome: Option<RunOutcome>,
}

impl Trajectory {
    pub fn new(spec: &NetworkSpec) -> Self {
        Trajectory {
            groups: spec.groups.clone(),
            class_labels: spec.classes.iter().map(|c| c.label.clone()).collect(),
            class_groups: spec.classes.iter().map(|c| c.group.0).collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn truncated(&self) -> bool {
        self.outcome.is_some_and(|o| o.truncated())
    }

    pub fn counts_at(&self, i: usize) -> &[u64] {
        let g = self.groups.len();
        &self.counts[i * g..(i + 1) * g]
    }

    pub fn group_series(&self, g: GroupId) -> impl Iterator<Item = u64> + '_ {
        let n = self.groups.len();
        self.counts.iter().skip(g.0).step_by(n).copied()
    }

    pub fn total_at(&self, i: usize) -> u64 {
        self.counts_at(i).iter().sum()
    }

    pub fn group_by_label(&self, label: &str) -> Option<GroupId> {
        self.groups.iter().position(|g| g == label).map(GroupId)
    }

    /// Append a sample; used by the recorder and for hand-built logs.
    pub fn push_sample(&mut self, time: f64, counts: &[u64], work: Workloads) {
        debug_assert_eq!(counts.len(), self.groups.len());
        self.times.push(time);
        self.counts.extend_from_slice(counts);
        self.work.push(work);
    }

    /// Arrival times at a class taken from the event log.
    pub fn arrival_times(&self, class: ClassId) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == super::RecordKind::Arrival && e.class == class)
            .map(|e| e.time)
            .collect()
    }

    pub fn write_events_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "kind", "class", "job_id"])?;
        for e in &self.events {
            out.write_record([
                e.time.to_string(),
                e.kind.as_str().to_string(),
                self.class_labels[e.class.0].clone(),
                e.job_id.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_series_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string()];
        header.extend(self.groups.iter().map(|g| format!("Z{g}")));
        header.extend(["W3", "W6", "Wtotal"].map(String::from));
        out.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.counts_at(i).iter().map(|c| c.to_string()));
            let w = self.work[i];
            row.extend([w.w3, w.w6, w.total].map(|x| x.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Observer that builds a [`Trajectory`].
#[derive(Debug, Clone)]
pub struct Recorder {
    pub trajectory: Trajectory,
    log_events: bool,
    mode: SeriesMode,
    next_grid: Option<f64>,
    grid_index: u64,
}

impl Recorder {
    pub fn new(spec: &NetworkSpec, log_events: bool, mode: SeriesMode) -> Self {
        let next_grid = match mode {
            SeriesMode::Grid(_) | SeriesMode::EveryAndGrid(_) => Some(0.0),
            _ => None,
        };
        Recorder {
            trajectory: Trajectory::new(spec),
            log_events,
            mode,
            next_grid,
            grid_index: 0,
        }
    }

    fn sample(&mut self, sim: &Simulation) {
        self.trajectory.push_sample(sim.clock(), sim.group_counts(), sim.workloads());
    }

    fn every(&self) -> bool {
        matches!(self.mode, SeriesMode::Every | SeriesMode::EveryAndGrid(_))
    }

    pub fn finish(mut self, outcome: RunOutcome) -> Trajectory {
        self.trajectory.outcome = Some(outcome);
        self.trajectory
    }
}

impl Observer for Recorder {
    fn on_start(&mut self, sim: &Simulation) {
        if self.every() {
            self.sample(sim);
        }
        if let Some(g) = self.next_grid {
            // resume the grid from the current clock
            if g < sim.clock() {
                if let SeriesMode::Grid(dt) | SeriesMode::EveryAndGrid(dt) = self.mode {
                    self.grid_index = (sim.clock() / dt).ceil() as u64;
                    self.next_grid = Some(self.grid_index as f64 * dt);
                }
            }
        }
    }

    fn on_record(&mut self, rec: &EventRecord) {
        if self.log_events {
            self.trajectory.events.push(*rec);
        }
    }

    fn on_step(&mut self, sim: &Simulation) {
        if self.every() {
            self.sample(sim);
        }
    }

    fn next_grid(&self) -> Option<f64> {
        self.next_grid
    }

    fn on_grid(&mut self, sim: &Simulation) {
        self.sample(sim);
        if let SeriesMode::Grid(dt) | SeriesMode::EveryAndGrid(dt) = self.mode {
            self.grid_index += 1;
            self.next_grid = Some(self.grid_index as f64 * dt);
        }
    }
}

impl Simulation {
    /// Run with a fresh recorder and return the trajectory.
    pub fn record(&mut self, stop: &StopRule, log_events: bool, mode: SeriesMode) -> Trajectory {
        let mut rec = Recorder::new(self.spec(), log_events, mode);
        let outcome = self.run(stop, &mut rec);
        rec.finish(outcome)
    }
}
