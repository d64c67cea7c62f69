//! Experiment drivers built from the model, engine and observables.

mod equivalence;
mod induction;
mod lemmas;
pub mod stats;

use std::sync::mpsc::Sender;

use rayon::prelude::*;

pub use equivalence::{
    counts_at, exp_ps_hlpps, exp_stage_coupling, KsRepeat, PsHlppsConfig, PsHlppsReport, StageCouplingReport,
};
pub use induction::{
    exp_induction, exp_instability, exp_workload_growth, growth_of, parameter_scan, run_cycles, scan_candidates,
    CycleGrowth, CycleRun, FrequencyRow, GrowthReport, InductionConfig, InductionReport, ScanEntry, ScanReport,
};
pub use lemmas::{
    counting_path, drift_path, exp_cluster_bound, exp_counting_ld, exp_drift_lemma, ClusterBoundReport,
    CountingConfig, CountingReport, DriftConfig, DriftPath, DriftReport,
};
pub use stats::TailEstimate;

use crate::error::{Error, Result};

/// Completion notices sent by workers, one per finished task index.
#[derive(Debug, Clone)]
pub struct Progress(pub Sender<usize>);

/// Map `f` over `0..n` on at most `jobs` threads, keeping index order.
pub fn par_map<T, F>(n: usize, jobs: usize, progress: Option<&Progress>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let run = |i: usize| {
        let r = f(i);
        if let Some(p) = progress {
            let _ = p.0.send(i);
        }
        r
    };
    if jobs <= 1 {
        return (0..n).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(run).collect())
}
