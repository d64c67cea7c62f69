//! Pathwise and distributional equivalences: processor sharing against
//! head-of-line processor sharing, and a network against its stage
//! expansion.

use serde::{Deserialize, Serialize};

use super::stats::{ks_critical, ks_statistic};
use super::{par_map, Progress};
use crate::engine::{coupled_run, CoupledReport, InitialCondition, NoObserver, Simulation, StopRule};
use crate::error::{Error, Result};
use crate::model::{build_fig1, build_fig2, stage_count, Discipline, NetworkSpec};
use crate::stochastics::{ServiceLaw, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsHlppsConfig {
    /// Sampling time.
    pub t: f64,
    pub replications: usize,
    pub repeats: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl PsHlppsConfig {
    pub fn preset() -> Self {
        PsHlppsConfig {
            t: 50.0,
            replications: 1000,
            repeats: 50,
            alpha: 0.01,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsRepeat {
    pub repeat: usize,
    /// Per group.
    pub statistics: Vec<f64>,
    pub critical: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsHlppsReport {
    pub config: PsHlppsConfig,
    pub network: String,
    pub groups: Vec<String>,
    pub repeats: Vec<KsRepeat>,
    /// Fraction of repeats where every group passes.
    pub pass_fraction: f64,
    /// Per group: fraction of repeats below the critical value.
    pub group_pass_fraction: Vec<f64>,
}

/// Group counts at time `t` for one replication.
pub fn counts_at(spec: &NetworkSpec, t: f64, key: StreamKey) -> Result<Vec<u64>> {
    let mut sim = Simulation::with_key(spec, &InitialCondition::empty(), key)?;
    sim.run(&StopRule::Horizon(t), &mut NoObserver);
    Ok(sim.group_counts().to_vec())
}

/// Compare group-count distributions at time `t` under PS and HLPPS. Every
/// service law must be exponential.
pub fn exp_ps_hlpps(
    spec: &NetworkSpec,
    cfg: &PsHlppsConfig,
    jobs: usize,
    progress: Option<&Progress>,
) -> Result<PsHlppsReport> {
    if let Some(c) = spec.classes.iter().find(|c| !c.service.is_exponential()) {
        return Err(Error::param(format!(
            "class {} has non-exponential service; the comparison requires exponential laws",
            c.label
        )));
    }
    if cfg.replications < 2 || cfg.repeats == 0 || !(cfg.t >= 0.0) || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::param("need replications >= 2, repeats >= 1, t >= 0 and alpha in (0, 1)"));
    }
    let ps = spec.clone().with_discipline(Discipline::Ps);
    let hl = spec.clone().with_discipline(Discipline::Hlpps);
    ps.validate()?;
    let root = StreamKey::root(cfg.seed).named("ps-hlpps");
    let n = cfg.replications;
    // index space: repeat, discipline, replication
    let samples = par_map(cfg.repeats * 2 * n, jobs, progress, |i| {
        let (repeat, rest) = (i / (2 * n), i % (2 * n));
        let (disc, rep) = (rest / n, rest % n);
        let (net, label) = if disc == 0 { (&ps, "ps") } else { (&hl, "hlpps") };
        counts_at(net, cfg.t, root.named(label).child(repeat as u64).child(rep as u64))
    })?;
    let groups = spec.groups.len();
    let critical = ks_critical(cfg.alpha, n, n);
    let mut repeats = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let block = &samples[r * 2 * n..(r + 1) * 2 * n];
        let statistics: Vec<f64> = (0..groups)
            .map(|g| {
                let a: Vec<f64> = block[..n].iter().map(|c| c[g] as f64).collect();
                let b: Vec<f64> = block[n..].iter().map(|c| c[g] as f64).collect();
                ks_statistic(&a, &b)
            })
            .collect();
        let pass = statistics.iter().all(|d| *d < critical);
        repeats.push(KsRepeat {
            repeat: r,
            statistics,
            critical,
            pass,
        });
    }
    let total = cfg.repeats as f64;
    Ok(PsHlppsReport {
        config: cfg.clone(),
        network: spec.name.clone(),
        groups: spec.groups.clone(),
        pass_fraction: repeats.iter().filter(|r| r.pass).count() as f64 / total,
        group_pass_fraction: (0..groups)
            .map(|g| repeats.iter().filter(|r| r.statistics[g] < critical).count() as f64 / total)
            .collect(),
        repeats,
    })
}

/// Time grid for the coupled pair: with every duration a multiple of this
/// power of two, clock sums on preemptive LIFO stations are exact.
pub const COUPLING_QUANTUM: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCouplingReport {
    #[serde(rename = "M")]
    pub scale: f64,
    pub delta: f64,
    pub stages: usize,
    pub seed: u64,
    pub time_quantum: f64,
    pub coupling: CoupledReport,
    pub pass: bool,
}

/// Run the six-class network and its stage expansion in lockstep.
pub fn exp_stage_coupling(
    scale: f64,
    delta: f64,
    seed: u64,
    horizon: f64,
    max_steps: u64,
    keep_trajectories: bool,
) -> Result<StageCouplingReport> {
    let stages = stage_count(delta)?;
    let q = COUPLING_QUANTUM;
    let b = build_fig2(scale, Some(delta), false, Some(stages))?.on_time_grid(q)?;
    let mut a = build_fig1(scale, Some(delta), false)?.on_time_grid(q)?;
    // Each parent class takes the exact total of its snapped stages.
    for c in &mut a.classes {
        let prefix = format!("{}.", c.label);
        let staged: Vec<f64> = b
            .classes
            .iter()
            .filter(|s| s.label.starts_with(&prefix))
            .map(|s| s.service.mean())
            .collect();
        if !staged.is_empty() {
            c.service = ServiceLaw::Deterministic { mean: staged.iter().sum() };
        }
    }
    a.validate()?;
    let coupling = coupled_run(&a, &b, &InitialCondition::empty(), seed, horizon, max_steps, keep_trajectories)?;
    Ok(StageCouplingReport {
        scale,
        delta,
        stages,
        seed,
        time_quantum: q,
        pass: coupling.max_count_discrepancy == 0 && coupling.max_work_discrepancy <= 1e-9,
        coupling,
    })
}
