//! Run configuration, command dispatch and artifact emission for the
//! command-line tool.

use std::path::{Path, PathBuf};
use std::sync::mpsc;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::engine::{InitialCondition, SeriesMode, Simulation, StopReason, StopRule, DEFAULT_EVENT_CAP};
use crate::error::{Error, Result};
use crate::experiments::{
    exp_counting_ld, exp_drift_lemma, exp_induction, exp_instability, exp_ps_hlpps, exp_stage_coupling,
    exp_workload_growth, parameter_scan, scan_candidates, CountingConfig, DriftConfig, GrowthReport, InductionConfig,
    Progress, PsHlppsConfig,
};
use crate::model::{build_fig1, build_fig2, traffic, Discipline, GroupId, NetworkSpec};
use crate::observables::write_cycles_csv;
use crate::output::{LineChart, OutputDir};
use crate::stochastics::{solve_nu_params, ArrivalLaw, NuSolveRecord};

/// Environment variable naming the default output root.
pub const OUT_DIR_ENV: &str = "LIFONET_OUT_DIR";

/// Growth ratio required of every per-cycle median.
pub const GROWTH_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate a network up to a horizon.
    Simulate,
    /// One induction cycle per replication; event frequencies.
    Induction,
    /// Consecutive cycles on one path; growth ratios.
    Instability,
    /// Unit-work queue idle and excursion tails.
    DriftLemma,
    /// Renewal counting-process deviation tails.
    CountingLd,
    /// PS against HLPPS group-count distributions.
    PsHlpps,
    /// Six-class network against its stage expansion in lockstep.
    StageCoupling,
    /// Total workload along consecutive cycles.
    WorkloadGrowth,
    /// Solve the clustered interarrival law.
    SolveNu,
    /// Validate a network and report station loads.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Induction => "induction",
            Command::Instability => "instability",
            Command::DriftLemma => "drift-lemma",
            Command::CountingLd => "counting-ld",
            Command::PsHlpps => "ps-hlpps",
            Command::StageCoupling => "stage-coupling",
            Command::WorkloadGrowth => "workload-growth",
            Command::SolveNu => "solve-nu",
            Command::Validate => "validate",
        }
    }

    fn needs_n(&self) -> bool {
        matches!(self, Command::Induction | Command::Instability | Command::WorkloadGrowth)
    }
}

/// Every run parameter. File keys and flag names coincide; unset fields
/// take the documented defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[arg(skip)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,

    /// Network: fig1, fig2 or a network TOML file [default: fig1]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<String>,

    /// Interarrival scale M [default: 2000; 10 for ps-hlpps]
    #[arg(long = "M")]
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,

    /// Service gap delta [default: 0.1; 0.5 for ps-hlpps and stage-coupling]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,

    /// Derive delta = M^(-1/15) from M
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couple: Option<bool>,

    /// Initial jobs at the head class (class 2, or 5 when mirrored)
    #[arg(long = "N")]
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,

    /// Stage count of the expanded network [default: (1-delta+delta^3)/delta^3]
    #[arg(long = "L")]
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,

    /// Discipline applied to every station
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discipline: Option<String>,

    /// Simulation horizon [stage-coupling default: unbounded]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,

    /// Stop a simulation once this group label empties
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_group: Option<String>,

    /// Event cap; reaching it truncates the run [default: 1e9; 1e6 for stage-coupling]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,

    /// Grid spacing of the recorded series [default: every event]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,

    /// Also write the event log
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_events: Option<bool>,

    /// Root seed [default: 1]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Replications [defaults: 20 cycles, 10000 drift, 1000 counting and ps-hlpps]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,

    /// Cycles per replication [default: 3]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycles: Option<usize>,

    /// Start from the mirrored head class
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirrored: Option<bool>,

    /// Scan candidate presets when the growth requirements fail
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<bool>,

    /// Arrival rate excess of the drift queue [default: 0.2]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,

    /// Relative deviation of the counting process [default: 0.1]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    /// Sampling time of ps-hlpps [default: 50]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,

    /// Repeated ps-hlpps experiments [default: 50]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,

    /// Test level of ps-hlpps [default: 0.01]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,

    /// Output directory [default: $LIFONET_OUT_DIR/<command> or out/<command>]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,

    /// Write SVG charts
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<bool>,

    /// Worker threads [default: 1]
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "lifonet", version, about = "Multiclass LIFO queueing network simulator")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,

    /// TOML file with RunConfig keys; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub flags: RunConfig,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        overlay!(
            self, top, command, net, scale, delta, couple, n, stages, discipline, horizon, stop_group, max_events,
            sample_dt, log_events, seed, replications, cycles, mirrored, scan, eta, beta, t, repeats, alpha,
            output_dir, plot, jobs
        )
    }

    pub fn command(&self) -> Result<Command> {
        self.command.ok_or_else(|| Error::Config("no command given".into()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn plot(&self) -> bool {
        self.plot.unwrap_or(false)
    }

    pub fn cycles(&self) -> usize {
        self.cycles.unwrap_or(3)
    }

    fn net_name(&self) -> &str {
        self.net.as_deref().unwrap_or("fig1")
    }

    fn builtin_net(&self) -> bool {
        matches!(self.net_name(), "fig1" | "fig2")
    }

    pub fn scale(&self) -> f64 {
        let fallback = match self.command {
            Some(Command::PsHlpps) => 10.0,
            _ => 2000.0,
        };
        self.scale.unwrap_or(fallback)
    }

    pub fn delta(&self) -> Option<f64> {
        if self.couple.unwrap_or(false) {
            return None;
        }
        let fallback = match self.command {
            Some(Command::PsHlpps | Command::StageCoupling) => 0.5,
            _ => 0.1,
        };
        Some(self.delta.unwrap_or(fallback))
    }

    pub fn output_dir(&self) -> PathBuf {
        let name = self.command.map_or("run", |c| c.name());
        match &self.output_dir {
            Some(p) => p.clone(),
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out"))
                .join(name),
        }
    }

    /// Reject conflicting selectors and missing required values.
    pub fn validate(&self) -> Result<()> {
        let cmd = self.command()?;
        let conflict = |msg: &str| Err(Error::Config(format!("conflicting options: {msg}")));
        if self.couple.unwrap_or(false) && self.delta.is_some() {
            return conflict("couple derives delta from M; drop one of them");
        }
        if !self.builtin_net() && (self.scale.is_some() || self.delta.is_some() || self.couple.is_some()) {
            return conflict("a network file fixes its own parameters; M, delta and couple select a built-in network");
        }
        if self.stages.is_some() && self.net_name() != "fig2" && cmd != Command::StageCoupling {
            return conflict("L applies to the staged network fig2 only");
        }
        if cmd.needs_n() && self.n.is_none() {
            return Err(Error::Config(format!("{} requires N", cmd.name())));
        }
        if cmd.needs_n() && self.net_name() != "fig1" {
            return Err(Error::Config(format!("{} runs on fig1 only", cmd.name())));
        }
        if let Some(d) = &self.discipline {
            Discipline::parse(d)?;
        }
        if cmd == Command::Simulate && self.horizon.is_none() && self.stop_group.is_none() {
            return Err(Error::Config("simulate needs a horizon or a stop group".into()));
        }
        Ok(())
    }

    /// The selected network with the discipline override applied.
    pub fn network(&self) -> Result<NetworkSpec> {
        let mut spec = match self.net_name() {
            "fig1" => build_fig1(self.scale(), self.delta(), self.couple.unwrap_or(false))?,
            "fig2" => build_fig2(self.scale(), self.delta(), self.couple.unwrap_or(false), self.stages)?,
            path => NetworkSpec::from_toml(&std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read network file {path}: {e}"))
            })?)?,
        };
        if let Some(d) = &self.discipline {
            spec = spec.with_discipline(Discipline::parse(d)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn induction(&self) -> Result<InductionConfig> {
        let delta = match self.delta() {
            Some(d) => d,
            None => crate::model::resolve_delta(self.scale(), None, true)?,
        };
        Ok(InductionConfig {
            scale: self.scale(),
            delta,
            n: self.n.ok_or_else(|| Error::Config("N is required".into()))?,
            replications: self.replications.unwrap_or(20),
            seed: self.seed(),
            mirrored: self.mirrored.unwrap_or(false),
            event_cap: self.max_events.unwrap_or(DEFAULT_EVENT_CAP),
            series_dt: self.sample_dt,
        })
    }
}

/// Merge the optional config file with the flags; flags win.
pub fn parse_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => RunConfig::from_toml(
            &std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?,
        )?,
        None => RunConfig::default(),
    };
    let mut cfg = base.overlay(cli.flags.clone());
    cfg.command = Some(cli.command);
    cfg.validate()?;
    Ok(cfg)
}

/// How a completed run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// The event cap cut a run short; partial outputs were written.
    Truncated,
    /// A verification check did not pass.
    CheckFailed,
}

impl RunStatus {
    pub fn name(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Truncated => "truncated",
            RunStatus::CheckFailed => "check_failed",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Truncated => 3,
            RunStatus::CheckFailed => 1,
        }
    }
}

/// Exit code for an error: 2 configuration, 3 truncation, 4 solver, 1 other.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Topology(_) | Error::Config(_) | Error::Unsorted(_) => 2,
        Error::Truncated(_) => 3,
        Error::SolverDiverged { .. } => 4,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
    }
}

/// Reports finished replications on stderr.
fn progress_printer(total: usize) -> (Progress, std::thread::JoinHandle<()>) {
    let (tx, rx) = mpsc::channel::<usize>();
    let handle = std::thread::spawn(move || {
        let step = (total / 10).max(1);
        for (done, _) in rx.iter().enumerate() {
            let done = done + 1;
            if done % step == 0 || done == total {
                eprintln!("{done}/{total} replications");
            }
        }
    });
    (Progress(tx), handle)
}

fn with_progress<T>(total: usize, f: impl FnOnce(&Progress) -> Result<T>) -> Result<T> {
    let (progress, handle) = progress_printer(total);
    let out = f(&progress);
    drop(progress);
    let _ = handle.join();
    out
}

/// Run a resolved config and write its artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunStatus> {
    let cmd = cfg.command()?;
    let params = serde_json::to_value(cfg)?;
    let mut out = OutputDir::create(cfg.output_dir(), cmd.name(), cfg.seed(), params)?;
    out.write("config.toml", cfg.to_toml()?.as_bytes())?;
    let status = match cmd {
        Command::Simulate => simulate(cfg, &mut out),
        Command::Induction => induction(cfg, &mut out),
        Command::Instability | Command::WorkloadGrowth => growth(cfg, cmd, &mut out),
        Command::DriftLemma => drift(cfg, &mut out),
        Command::CountingLd => counting(cfg, &mut out),
        Command::PsHlpps => ps_hlpps(cfg, &mut out),
        Command::StageCoupling => stage_coupling(cfg, &mut out),
        Command::SolveNu => solve_nu(cfg, &mut out),
        Command::Validate => validate(cfg, &mut out),
    };
    match status {
        Ok(s) => {
            out.finish(s.name())?;
            Ok(s)
        }
        Err(e) => {
            out.finish(&format!("error: {e}"))?;
            Err(e)
        }
    }
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let spec = cfg.network()?;
    let mut init = InitialCondition::empty();
    if let Some(n) = cfg.n {
        let head = if cfg.mirrored.unwrap_or(false) { "5" } else { "2" };
        let class = spec
            .class_by_label(head)
            .ok_or_else(|| Error::Config(format!("N places jobs at class {head}, which the network lacks")))?;
        init = init.with_jobs(class, n as usize);
    }
    let mut sim = Simulation::new(&spec, &init, cfg.seed())?;
    sim.set_event_cap(cfg.max_events.unwrap_or(DEFAULT_EVENT_CAP));
    let mut rules = Vec::new();
    if let Some(h) = cfg.horizon {
        rules.push(StopRule::Horizon(h));
    }
    if let Some(label) = &cfg.stop_group {
        let g = spec
            .groups
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Config(format!("unknown stop group {label}")))?;
        rules.push(StopRule::GroupEmpty(GroupId(g)));
    }
    let mode = cfg.sample_dt.map_or(SeriesMode::Every, SeriesMode::Grid);
    let traj = sim.record(&StopRule::Any(rules), cfg.log_events.unwrap_or(false), mode);
    out.write_with("trajectory.csv", |b| traj.write_series_csv(b))?;
    if cfg.log_events.unwrap_or(false) {
        out.write_with("events.csv", |b| traj.write_events_csv(b))?;
    }
    let outcome = traj.outcome.expect("recorded runs carry an outcome");
    out.write_json(
        "summary.json",
        &serde_json::json!({
            "network": spec.name,
            "outcome": format!("{:?}", outcome.reason),
            "steps": outcome.steps,
            "time": outcome.time,
            "groups": spec.groups,
            "final_counts": sim.group_counts(),
            "final_workloads": sim.workloads(),
            "loads": traffic(&spec),
        }),
    )?;
    if cfg.plot() {
        let mut chart = LineChart::new("Jobs per class", "t", "Z");
        for (g, label) in traj.groups.iter().enumerate() {
            let pts = traj.times.iter().enumerate().map(|(i, &t)| (t, traj.counts_at(i)[g] as f64)).collect();
            chart = chart.with_series(&format!("Z{label}"), pts);
        }
        out.write_chart("trajectory.svg", &chart)?;
    }
    Ok(if outcome.reason == StopReason::EventCap {
        RunStatus::Truncated
    } else {
        RunStatus::Ok
    })
}

fn induction(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let ic = cfg.induction()?;
    let report = with_progress(ic.replications, |p| exp_induction(&ic, cfg.jobs(), Some(p)))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let marks: Vec<_> = report.runs.iter().flat_map(|r| r.cycles.iter().cloned()).collect();
    out.write_with("cycles.csv", |b| write_cycles_csv(&marks, b))?;
    out.write_with("frequencies.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        for row in &report.table {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_json("report.json", &report)?;
    Ok(if report.truncated > 0 {
        RunStatus::Truncated
    } else {
        RunStatus::Ok
    })
}

fn growth_chart(report: &GrowthReport) -> LineChart {
    let mut chart = LineChart::new("Head count at cycle end", "cycle", "head count").log_y();
    for (rep, g) in report.growth.iter().enumerate() {
        let mut pts = vec![(0.0, report.config.n as f64)];
        pts.extend(g.iter().map(|c| (c.cycle as f64, c.head_end as f64)));
        chart = chart.with_series(&format!("rep {rep}"), pts);
    }
    let mut med = vec![(0.0, report.config.n as f64)];
    med.extend(report.median_head.iter().enumerate().map(|(i, h)| ((i + 1) as f64, *h)));
    chart.with_series("median", med)
}

fn growth(cfg: &RunConfig, cmd: Command, out: &mut OutputDir) -> Result<RunStatus> {
    let ic = cfg.induction()?;
    let cycles = cfg.cycles();
    let report = with_progress(ic.replications, |p| {
        if cmd == Command::WorkloadGrowth {
            exp_workload_growth(&ic, cycles, cfg.jobs(), Some(p))
        } else {
            exp_instability(&ic, cycles, cfg.jobs(), Some(p))
        }
    })?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    out.write_with("growth.csv", |b| report.write_growth_csv(b))?;
    if cmd == Command::WorkloadGrowth {
        out.write_with("workload.csv", |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["replication", "t", "Z", "W"])?;
            for (rep, s) in report.series.iter().enumerate() {
                for (t, z, work) in s {
                    w.write_record([rep.to_string(), t.to_string(), z.to_string(), work.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        })?;
    }
    let summary = serde_json::json!({
        "median_ratio": report.median_ratio,
        "median_head": report.median_head,
        "growth_ok": report.growth_ok(GROWTH_THRESHOLD),
        "min_z_hits": report.min_z_hits(),
        "min_z_majority": report.min_z_majority(),
        "work_growth_hits": report.work_growth_hits(),
        "work_low_frequency": report.work_low_frequency(),
        "truncated": report.truncated.iter().filter(|t| **t).count(),
        "warnings": report.warnings,
        "table": report.table,
    });
    out.write_json("summary.json", &summary)?;
    if cfg.plot() {
        out.write_chart("growth.svg", &growth_chart(&report))?;
        if cmd == Command::WorkloadGrowth {
            let mut chart = LineChart::new("Total workload", "t", "W").log_y();
            for (rep, s) in report.series.iter().enumerate() {
                chart = chart.with_series(&format!("rep {rep}"), s.iter().map(|(t, _, w)| (*t, *w)).collect());
            }
            out.write_chart("workload.svg", &chart)?;
        }
    }
    let passed = report.growth_ok(GROWTH_THRESHOLD) && report.min_z_majority();
    if !passed && cfg.scan.unwrap_or(false) {
        let scan = parameter_scan(&scan_candidates(&ic), cycles, GROWTH_THRESHOLD, cfg.jobs(), None)?;
        out.write_json("scan.json", &scan)?;
        if let Some(i) = scan.selected {
            let c = &scan.entries[i].config;
            eprintln!("scan selected M = {}, delta = {}, N = {}", c.scale, c.delta, c.n);
        } else {
            eprintln!("scan found no preset meeting the growth requirements");
        }
    }
    Ok(if report.truncated.iter().any(|t| *t) {
        RunStatus::Truncated
    } else {
        RunStatus::Ok
    })
}

fn tail_chart(title: &str, x: &str, tails: &[(&str, &crate::experiments::TailEstimate)]) -> LineChart {
    let mut chart = LineChart::new(title, x, "P").log_y();
    for (label, t) in tails {
        let pts = t.thresholds.iter().zip(&t.p_hat).map(|(a, b)| (*a, *b)).collect();
        chart = chart.with_series(label, pts);
    }
    chart
}

fn drift(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let mut dc = DriftConfig::preset();
    dc.eta = cfg.eta.unwrap_or(dc.eta);
    dc.replications = cfg.replications.unwrap_or(dc.replications);
    dc.seed = cfg.seed();
    let report = with_progress(dc.replications, |p| exp_drift_lemma(&dc, cfg.jobs(), Some(p)))?;
    out.write_with("idle_tail.csv", |b| report.idle.write_csv(b))?;
    out.write_with("excursion_tail.csv", |b| report.excursion.write_csv(b))?;
    out.write_json("report.json", &report)?;
    if cfg.plot() {
        out.write_chart("idle_tail.svg", &tail_chart("Idle time tail", "x", &[("P(|B| >= x)", &report.idle)]))?;
        out.write_chart(
            "excursion_tail.svg",
            &tail_chart("Late excursions", "t0", &[("P(excursion after t0)", &report.excursion)]),
        )?;
    }
    Ok(RunStatus::Ok)
}

fn counting(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let mut cc = CountingConfig::preset()?;
    if cfg.scale.is_some() {
        cc.law = ArrivalLaw::nu(cfg.scale())?;
    }
    cc.beta = cfg.beta.unwrap_or(cc.beta);
    cc.replications = cfg.replications.unwrap_or(cc.replications);
    cc.seed = cfg.seed();
    let report = with_progress(cc.replications, |p| exp_counting_ld(&cc, cfg.jobs(), Some(p)))?;
    out.write_with("tail.csv", |b| report.tail.write_csv(b))?;
    out.write_json("report.json", &report)?;
    if cfg.plot() {
        out.write_chart("tail.svg", &tail_chart("Counting deviations", "t", &[("P(deviation)", &report.tail)]))?;
    }
    Ok(RunStatus::Ok)
}

fn ps_hlpps(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let mut spec = cfg.network()?;
    if cfg.builtin_net() {
        spec = spec.exponentialized();
    }
    let mut pc = PsHlppsConfig::preset();
    pc.t = cfg.t.unwrap_or(pc.t);
    pc.replications = cfg.replications.unwrap_or(pc.replications);
    pc.repeats = cfg.repeats.unwrap_or(pc.repeats);
    pc.alpha = cfg.alpha.unwrap_or(pc.alpha);
    pc.seed = cfg.seed();
    let total = 2 * pc.replications * pc.repeats;
    let report = with_progress(total, |p| exp_ps_hlpps(&spec, &pc, cfg.jobs(), Some(p)))?;
    out.write_with("ks.csv", |b| {
        let mut w = csv::Writer::from_writer(b);
        let mut header = vec!["repeat".to_string()];
        header.extend(report.groups.iter().map(|g| format!("D{g}")));
        header.extend(["critical", "pass"].map(String::from));
        w.write_record(&header)?;
        for r in &report.repeats {
            let mut row = vec![r.repeat.to_string()];
            row.extend(r.statistics.iter().map(|d| d.to_string()));
            row.extend([r.critical.to_string(), r.pass.to_string()]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write_json("report.json", &report)?;
    Ok(RunStatus::Ok)
}

fn stage_coupling(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let delta = cfg
        .delta()
        .map_or_else(|| crate::model::resolve_delta(cfg.scale(), None, true), Ok)?;
    let report = exp_stage_coupling(
        cfg.scale(),
        delta,
        cfg.seed(),
        cfg.horizon.unwrap_or(f64::INFINITY),
        cfg.max_events.unwrap_or(1_000_000),
        false,
    )?;
    out.write_json("report.json", &report)?;
    if let Some(d) = &report.coupling.first_divergence {
        eprintln!("coupling diverged: {d:?}");
    }
    Ok(if report.pass { RunStatus::Ok } else { RunStatus::CheckFailed })
}

fn solve_nu(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let params = solve_nu_params(cfg.scale())?;
    let record = NuSolveRecord::from(&params);
    println!(
        "M = {}: beta = {:.15}, gamma = {:.15}, mass residual = {:e}, mean residual = {:e}",
        record.m, record.beta, record.gamma, record.mass_residual, record.mean_residual
    );
    out.write_json("nu.json", &record)?;
    Ok(RunStatus::Ok)
}

fn validate(cfg: &RunConfig, out: &mut OutputDir) -> Result<RunStatus> {
    let spec = cfg.network()?;
    let report = traffic(&spec);
    for (s, load) in spec.stations.iter().zip(&report.station_loads) {
        println!("station {}: load {load:.6}", s.label);
    }
    out.write_json("traffic.json", &report)?;
    out.write("network.toml", spec.to_toml()?.as_bytes())?;
    Ok(RunStatus::Ok)
}

/// Parse, run and map the result to an exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = parse_config(&cli).and_then(|cfg| {
        let dir = cfg.output_dir();
        run(&cfg).inspect(|s| eprintln!("{}: {} ({})", cfg.command().map_or("run", |c| c.name()), s.name(), show(&dir)))
    });
    match result {
        Ok(s) => s.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}
