//! Induction cycles on the six-class network: one cycle, repeated cycles on
//! a single path, and the total-workload view of the same runs.

use serde::{Deserialize, Serialize};

use super::stats::{median, wilson, Z99};
use super::{par_map, Progress};
use crate::engine::{InitialCondition, Observer, Simulation, StopReason, StopRule};
use crate::error::{Error, Result};
use crate::model::{build_fig1, GroupId};
use crate::observables::{CycleMarks, CycleRoles, CycleTracker};
use crate::stochastics::StreamKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InductionConfig {
    #[serde(rename = "M")]
    pub scale: f64,
    pub delta: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub replications: usize,
    pub seed: u64,
    /// Start from `Z5(0) = N` instead of `Z2(0) = N`.
    #[serde(default)]
    pub mirrored: bool,
    /// Event cap per cycle.
    #[serde(default = "default_cap")]
    pub event_cap: u64,
    /// Grid spacing of the recorded `Z`/`𝒲` series; none when absent.
    #[serde(default)]
    pub series_dt: Option<f64>,
}

fn default_cap() -> u64 {
    crate::engine::DEFAULT_EVENT_CAP
}

impl InductionConfig {
    /// The decoupled desk-scale preset.
    pub fn preset() -> Self {
        InductionConfig {
            scale: 2000.0,
            delta: 0.1,
            n: 40_000,
            replications: 20,
            seed: 1,
            mirrored: false,
            event_cap: default_cap(),
            series_dt: None,
        }
    }

    /// Errors for unusable values; warnings for violated preconditions.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.n == 0 {
            return Err(Error::param("N must be positive"));
        }
        if self.replications == 0 {
            return Err(Error::param("replications must be positive"));
        }
        build_fig1(self.scale, Some(self.delta), false)?;
        let mut warnings = Vec::new();
        let need = 2.0 * self.scale / self.delta;
        if (self.n as f64) < need {
            warnings.push(format!("N = {} is below 2M/delta = {need}", self.n));
        }
        if self.delta >= 0.25 {
            warnings.push(format!("growth factor 1/(4 delta) = {} does not exceed 1", 0.25 / self.delta));
        }
        Ok(warnings)
    }
}

/// One replication run over consecutive cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRun {
    pub replication: usize,
    pub cycles: Vec<CycleMarks>,
    pub truncated: bool,
    /// Minimum total count over the whole run.
    pub min_z: u64,
    /// Sampled `(t, Z, 𝒲)` when a grid was requested.
    pub series: Vec<(f64, u64, f64)>,
    pub events: u64,
}

struct SeriesGrid {
    dt: f64,
    next: f64,
    points: Vec<(f64, u64, f64)>,
}

impl Observer for SeriesGrid {
    fn next_grid(&self) -> Option<f64> {
        Some(self.next)
    }

    fn on_grid(&mut self, sim: &Simulation) {
        self.points.push((sim.clock(), sim.total_jobs(), sim.total_work()));
        self.next += self.dt;
    }
}

struct Pair<'a, A, B>(&'a mut A, Option<&'a mut B>);

impl<A: Observer, B: Observer> Observer for Pair<'_, A, B> {
    fn on_start(&mut self, sim: &Simulation) {
        self.0.on_start(sim);
        if let Some(b) = self.1.as_mut() {
            b.on_start(sim);
        }
    }
    fn on_step(&mut self, sim: &Simulation) {
        self.0.on_step(sim);
        if let Some(b) = self.1.as_mut() {
            b.on_step(sim);
        }
    }
    fn next_grid(&self) -> Option<f64> {
        self.1.as_ref().and_then(|b| b.next_grid())
    }
    fn on_grid(&mut self, sim: &Simulation) {
        if let Some(b) = self.1.as_mut() {
            b.on_grid(sim);
        }
    }
}

/// Run `cycles` consecutive cycles on one path, swapping roles after each.
pub fn run_cycles(cfg: &InductionConfig, replication: usize, cycles: usize) -> Result<CycleRun> {
    let spec = build_fig1(cfg.scale, Some(cfg.delta), false)?;
    let mut roles = CycleRoles::six_class(cfg.mirrored);
    let init = InitialCondition::empty().with_jobs(crate::model::ClassId(roles.head), cfg.n as usize);
    let key = StreamKey::root(cfg.seed).named("induction").child(replication as u64);
    let mut sim = Simulation::with_key(&spec, &init, key)?;
    sim.set_event_cap(cfg.event_cap);
    let mut grid = cfg.series_dt.map(|dt| SeriesGrid { dt, next: 0.0, points: Vec::new() });
    let mut out = CycleRun {
        replication,
        cycles: Vec::with_capacity(cycles),
        truncated: false,
        min_z: u64::MAX,
        series: Vec::new(),
        events: 0,
    };
    for cycle in 1..=cycles {
        let mut tracker = CycleTracker::new(cycle, roles, cfg.delta);
        let head = StopRule::GroupEmpty(GroupId(roles.head));
        let station = StopRule::GroupsEmpty(vec![GroupId(roles.station[0]), GroupId(roles.station[1])]);
        let mut ok = true;
        for stop in [head, station] {
            let outcome = sim.run(&stop, &mut Pair(&mut tracker, grid.as_mut()));
            if outcome.reason != StopReason::Satisfied {
                ok = false;
                break;
            }
        }
        let marks = tracker.finish();
        out.min_z = out.min_z.min(marks.min_z);
        out.cycles.push(marks);
        if !ok {
            out.truncated = true;
            break;
        }
        roles = roles.swapped();
    }
    out.events = sim.steps();
    if let Some(g) = grid {
        out.series = g.points;
    }
    Ok(out)
}

fn run_all(cfg: &InductionConfig, cycles: usize, jobs: usize, progress: Option<&Progress>) -> Result<Vec<CycleRun>> {
    cfg.validate()?;
    if cycles == 0 {
        return Err(Error::param("at least one cycle is required"));
    }
    par_map(cfg.replications, jobs, progress, |rep| run_cycles(cfg, rep, cycles))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub event: String,
    pub hits: u64,
    pub trials: u64,
    pub frequency: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionReport {
    pub config: InductionConfig,
    pub warnings: Vec<String>,
    pub runs: Vec<CycleRun>,
    pub completed: u64,
    pub truncated: u64,
    pub table: Vec<FrequencyRow>,
}

fn frequency_table(marks: &[&CycleMarks]) -> Vec<FrequencyRow> {
    type Pick = fn(&crate::observables::CycleEvents) -> bool;
    let rows: [(&str, Pick); 10] = [
        ("next_head_at_T", |e| e.next_head),
        ("feeders_at_T", |e| e.feeders),
        ("station_empty_at_T", |e| e.station_empty),
        ("other_work_at_T", |e| e.other_work),
        ("min_occupancy_to_T", |e| e.min_occupancy),
        ("all_five", |e| e.all()),
        ("T_window", |e| e.t_window),
        ("S1_window", |e| e.s1_window),
        ("S2_bound", |e| e.s2_bound),
        ("min_occupancy_to_S1", |e| e.min_occupancy_s1),
    ];
    let done: Vec<_> = marks.iter().filter_map(|m| m.events).collect();
    let trials = done.len() as u64;
    rows.iter()
        .map(|(name, pick)| {
            let hits = done.iter().filter(|e| pick(e)).count() as u64;
            let (lower, upper) = wilson(hits, trials, Z99);
            FrequencyRow {
                event: name.to_string(),
                hits,
                trials,
                frequency: if trials > 0 { hits as f64 / trials as f64 } else { f64::NAN },
                lower,
                upper,
            }
        })
        .collect()
}

/// One cycle per replication from `Z_head(0) = N`; frequencies of the
/// end-of-cycle events over completed replications.
pub fn exp_induction(cfg: &InductionConfig, jobs: usize, progress: Option<&Progress>) -> Result<InductionReport> {
    let warnings = cfg.validate()?;
    let runs = run_all(cfg, 1, jobs, progress)?;
    let marks: Vec<&CycleMarks> = runs.iter().filter(|r| !r.truncated).map(|r| &r.cycles[0]).collect();
    let truncated = runs.iter().filter(|r| r.truncated).count() as u64;
    Ok(InductionReport {
        config: cfg.clone(),
        warnings,
        completed: marks.len() as u64,
        truncated,
        table: frequency_table(&marks),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleGrowth {
    pub cycle: usize,
    pub t_end: f64,
    pub head_start: u64,
    pub head_end: u64,
    pub ratio: f64,
    pub min_z: u64,
    pub min_work: f64,
    pub work_low: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub config: InductionConfig,
    pub cycles: usize,
    pub warnings: Vec<String>,
    /// Per replication, per completed cycle.
    pub growth: Vec<Vec<CycleGrowth>>,
    pub truncated: Vec<bool>,
    pub run_min_z: Vec<u64>,
    pub median_ratio: Vec<f64>,
    pub median_head: Vec<f64>,
    pub table: Vec<Vec<FrequencyRow>>,
    pub series: Vec<Vec<(f64, u64, f64)>>,
}

pub fn growth_of(run: &CycleRun) -> Vec<CycleGrowth> {
    run.cycles
        .iter()
        .filter(|m| m.events.is_some())
        .map(|m| CycleGrowth {
            cycle: m.cycle,
            t_end: m.t_abs(),
            head_start: m.n,
            head_end: m.next_head_t,
            ratio: m.next_head_t as f64 / m.n as f64,
            min_z: m.min_z,
            min_work: m.min_work,
            work_low: m.work_low,
        })
        .collect()
}

impl GrowthReport {
    pub fn from_runs(cfg: &InductionConfig, cycles: usize, warnings: Vec<String>, runs: Vec<CycleRun>) -> Self {
        let growth: Vec<Vec<CycleGrowth>> = runs.iter().map(growth_of).collect();
        let per_cycle = |f: &dyn Fn(&CycleGrowth) -> f64| -> Vec<f64> {
            (0..cycles)
                .map(|c| {
                    // a truncated cycle counts as no growth
                    let v: Vec<f64> = growth.iter().map(|g| g.get(c).map_or(0.0, f)).collect();
                    median(&v)
                })
                .collect()
        };
        let median_ratio = per_cycle(&|g| g.ratio);
        let median_head = per_cycle(&|g| g.head_end as f64);
        let table = (0..cycles)
            .map(|c| {
                let m: Vec<&CycleMarks> = runs.iter().filter_map(|r| r.cycles.get(c)).collect();
                frequency_table(&m)
            })
            .collect();
        GrowthReport {
            config: cfg.clone(),
            cycles,
            warnings,
            truncated: runs.iter().map(|r| r.truncated).collect(),
            run_min_z: runs.iter().map(|r| r.min_z).collect(),
            series: runs.into_iter().map(|r| r.series).collect(),
            growth,
            median_ratio,
            median_head,
            table,
        }
    }

    /// Every per-cycle median ratio is at least `threshold` and median head
    /// counts strictly increase.
    pub fn growth_ok(&self, threshold: f64) -> bool {
        self.median_ratio.iter().all(|r| *r >= threshold)
            && self.median_head.windows(2).all(|w| w[1] > w[0])
            && self.median_head.len() == self.cycles
    }

    /// Replications whose minimum total count stayed at or above `N/4`.
    pub fn min_z_hits(&self) -> usize {
        let n = self.config.n as f64;
        self.run_min_z
            .iter()
            .zip(&self.truncated)
            .filter(|(z, t)| !**t && **z as f64 >= n / 4.0)
            .count()
    }

    pub fn min_z_majority(&self) -> bool {
        2 * self.min_z_hits() > self.run_min_z.len()
    }

    /// Replications whose per-cycle minimum workload strictly increases
    /// across all cycles.
    pub fn work_growth_hits(&self) -> usize {
        self.growth
            .iter()
            .filter(|g| g.len() == self.cycles && g.windows(2).all(|w| w[1].min_work > w[0].min_work))
            .count()
    }

    pub fn work_growth_majority(&self) -> bool {
        2 * self.work_growth_hits() > self.growth.len()
    }

    /// Frequency of `𝒲(t) <= N/6` somewhere in each cycle.
    pub fn work_low_frequency(&self) -> Vec<f64> {
        (0..self.cycles)
            .map(|c| {
                let v: Vec<bool> = self.growth.iter().filter_map(|g| g.get(c)).map(|g| g.work_low).collect();
                v.iter().filter(|b| **b).count() as f64 / v.len().max(1) as f64
            })
            .collect()
    }

    pub fn write_growth_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["replication", "cycle", "T", "head_start", "head_end", "ratio", "min_z", "min_work", "work_low"])?;
        for (rep, g) in self.growth.iter().enumerate() {
            for c in g {
                out.write_record([
                    rep.to_string(),
                    c.cycle.to_string(),
                    c.t_end.to_string(),
                    c.head_start.to_string(),
                    c.head_end.to_string(),
                    c.ratio.to_string(),
                    c.min_z.to_string(),
                    c.min_work.to_string(),
                    c.work_low.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Consecutive cycles on the same path.
pub fn exp_instability(cfg: &InductionConfig, cycles: usize, jobs: usize, progress: Option<&Progress>) -> Result<GrowthReport> {
    if cycles < 2 {
        return Err(Error::param("the instability experiment needs at least two cycles"));
    }
    let warnings = cfg.validate()?;
    let runs = run_all(cfg, cycles, jobs, progress)?;
    Ok(GrowthReport::from_runs(cfg, cycles, warnings, runs))
}

/// Same runs as [`exp_instability`], with a grid-sampled `𝒲(t)` series.
pub fn exp_workload_growth(
    cfg: &InductionConfig,
    cycles: usize,
    jobs: usize,
    progress: Option<&Progress>,
) -> Result<GrowthReport> {
    let mut cfg = cfg.clone();
    if cfg.series_dt.is_none() {
        cfg.series_dt = Some(cfg.n as f64 / cfg.delta / 100.0);
    }
    exp_instability(&cfg, cycles, jobs, progress)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub config: InductionConfig,
    pub median_ratio: Vec<f64>,
    pub median_head: Vec<f64>,
    pub min_z_hits: usize,
    pub work_growth_hits: usize,
    pub growth_ok: bool,
    pub min_z_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub entries: Vec<ScanEntry>,
    /// Index of the first entry meeting both requirements.
    pub selected: Option<usize>,
    /// Full report of the selected entry.
    pub selected_report: Option<GrowthReport>,
}

/// Candidate presets with `M <= 10^4` and `delta < 1/4`, ordered by
/// decreasing `M delta^6`: the work of one class-4 cluster relative to the
/// idle time of the nearly critical class-3 queue that would serve it.
pub fn scan_candidates(base: &InductionConfig) -> Vec<InductionConfig> {
    let mut out = Vec::new();
    for &(scale, delta) in &[(10000.0_f64, 0.24_f64), (10000.0, 0.22), (5000.0, 0.24), (10000.0, 0.2), (2000.0, 0.24)] {
        let n = (2.0 * scale / delta).ceil() as u64;
        out.push(InductionConfig {
            scale,
            delta,
            n,
            ..base.clone()
        });
    }
    out
}

/// Try presets in order until one meets the growth and occupancy
/// requirements over `cycles` cycles.
pub fn parameter_scan(
    candidates: &[InductionConfig],
    cycles: usize,
    ratio_threshold: f64,
    jobs: usize,
    progress: Option<&Progress>,
) -> Result<ScanReport> {
    let mut entries = Vec::new();
    for cfg in candidates {
        let r = exp_instability(cfg, cycles, jobs, progress)?;
        let entry = ScanEntry {
            config: cfg.clone(),
            growth_ok: r.growth_ok(ratio_threshold),
            min_z_ok: r.min_z_majority(),
            min_z_hits: r.min_z_hits(),
            work_growth_hits: r.work_growth_hits(),
            median_ratio: r.median_ratio.clone(),
            median_head: r.median_head.clone(),
        };
        let pass = entry.growth_ok && entry.min_z_ok;
        entries.push(entry);
        if pass {
            return Ok(ScanReport {
                selected: Some(entries.len() - 1),
                entries,
                selected_report: Some(r),
            });
        }
    }
    Ok(ScanReport {
        entries,
        selected: None,
        selected_report: None,
    })
}
