//! Verifiers for the single-queue drift bound, counting-process deviations
//! and the cluster-count bound of the clustered arrival law.

use serde::{Deserialize, Serialize};

use super::stats::{mean, std_dev, TailEstimate};
use super::{par_map, Progress};
use crate::error::{Error, Result};
use crate::observables::{cluster_bound, clusters_within, detect_clusters};
use crate::stochastics::{ArrivalLaw, NuParams, StreamKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// Arrival rate excess: Poisson rate `1 + eta`, unit work per job.
    pub eta: f64,
    pub t0_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Paths are followed up to `horizon_factor * max(t0_grid)`.
    #[serde(default = "default_horizon_factor")]
    pub horizon_factor: f64,
}

fn default_horizon_factor() -> f64 {
    20.0
}

impl DriftConfig {
    pub fn preset() -> Self {
        DriftConfig {
            eta: 0.2,
            t0_grid: vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            x_grid: vec![0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0],
            replications: 10_000,
            seed: 1,
            horizon_factor: default_horizon_factor(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.replications == 0 || self.t0_grid.is_empty() || self.x_grid.is_empty() {
            return Err(Error::param("replications and grids must be nonempty"));
        }
        for g in [&self.t0_grid, &self.x_grid] {
            if g.windows(2).any(|w| !(w[1] > w[0])) || g[0] < 0.0 {
                return Err(Error::param("grids must be nonnegative and strictly increasing"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPath {
    /// Total time with empty workload up to the horizon.
    pub idle: f64,
    /// Latest checked time `s` with `W_s >= 2 eta s`, or `-inf`.
    pub last_excursion: f64,
}

impl DriftPath {
    /// Whether `W_s >= 2 eta s` for some `s >= t0`.
    pub fn excursion_after(&self, t0: f64) -> bool {
        self.last_excursion >= t0
    }
}

/// One path of the unit-work queue fed at Poisson rate `1 + eta`. Between
/// arrivals `W_s - 2 eta s` decreases, so the excursion is checked at
/// arrival instants and at the grid times.
pub fn drift_path(cfg: &DriftConfig, rep: usize) -> DriftPath {
    let mut rng = StreamKey::root(cfg.seed).named("drift").child(rep as u64).stream();
    let rate = 1.0 + cfg.eta;
    let horizon = cfg.horizon_factor * cfg.t0_grid.last().copied().unwrap_or(0.0);
    let slope = 2.0 * cfg.eta;
    let (mut t, mut w, mut idle) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut last = f64::NEG_INFINITY;
    let mut next_t0 = 0;
    loop {
        let gap = rng.exp_rate(rate);
        let end = (t + gap).min(horizon);
        while next_t0 < cfg.t0_grid.len() && cfg.t0_grid[next_t0] <= end {
            let s = cfg.t0_grid[next_t0];
            if (w - (s - t)).max(0.0) >= slope * s {
                last = last.max(s);
            }
            next_t0 += 1;
        }
        idle += (end - t - w).max(0.0);
        if t + gap >= horizon {
            break;
        }
        w = (w - gap).max(0.0) + 1.0;
        t += gap;
        if w >= slope * t {
            last = t;
        }
    }
    DriftPath { idle, last_excursion: last }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub config: DriftConfig,
    pub idle: TailEstimate,
    pub excursion: TailEstimate,
}

pub fn exp_drift_lemma(cfg: &DriftConfig, jobs: usize, progress: Option<&Progress>) -> Result<DriftReport> {
    cfg.validate()?;
    let paths = par_map(cfg.replications, jobs, progress, |rep| Ok(drift_path(cfg, rep)))?;
    let idle: Vec<f64> = paths.iter().map(|p| p.idle).collect();
    let hits: Vec<u64> = (0..cfg.t0_grid.len())
        .map(|i| paths.iter().filter(|p| p.excursion_after(cfg.t0_grid[i])).count() as u64)
        .collect();
    Ok(DriftReport {
        config: cfg.clone(),
        idle: TailEstimate::from_samples(&idle, cfg.x_grid.clone(), 10),
        excursion: TailEstimate::from_hits(cfg.t0_grid.clone(), hits, cfg.replications as u64, 10),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    pub law: ArrivalLaw,
    /// Relative deviation threshold.
    pub beta: f64,
    pub t_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
}

impl CountingConfig {
    pub fn preset() -> Result<Self> {
        Ok(CountingConfig {
            law: ArrivalLaw::nu(100.0)?,
            beta: 0.1,
            t_grid: vec![1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5],
            replications: 1000,
            seed: 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    pub config: CountingConfig,
    pub mean_interarrival: f64,
    pub tail: TailEstimate,
    /// Per grid time: mean and standard error of `N_t / t`.
    pub rate_mean: Vec<f64>,
    pub rate_se: Vec<f64>,
}

/// Renewal counts `N_t` at each grid time along one path.
pub fn counting_path(law: &ArrivalLaw, t_grid: &[f64], key: StreamKey) -> Vec<u64> {
    let mut rng = key.stream();
    let mut counts = Vec::with_capacity(t_grid.len());
    let (mut s, mut n) = (0.0_f64, 0u64);
    let mut next = law.sample(&mut rng);
    for &t in t_grid {
        while s + next <= t {
            s += next;
            n += 1;
            next = law.sample(&mut rng);
        }
        counts.push(n);
    }
    counts
}

pub fn exp_counting_ld(cfg: &CountingConfig, jobs: usize, progress: Option<&Progress>) -> Result<CountingReport> {
    cfg.law.validate()?;
    if !(cfg.beta > 0.0) {
        return Err(Error::param("beta must be positive"));
    }
    if cfg.t_grid.windows(2).any(|w| !(w[1] > w[0])) || cfg.t_grid.first().is_none_or(|t| *t <= 0.0) {
        return Err(Error::param("t grid must be positive and strictly increasing"));
    }
    let mu = cfg.law.mean();
    let root = StreamKey::root(cfg.seed).named("counting");
    let paths = par_map(cfg.replications, jobs, progress, |rep| {
        Ok(counting_path(&cfg.law, &cfg.t_grid, root.child(rep as u64)))
    })?;
    let mut hits = vec![0u64; cfg.t_grid.len()];
    let mut rate_mean = Vec::new();
    let mut rate_se = Vec::new();
    for (i, &t) in cfg.t_grid.iter().enumerate() {
        let rates: Vec<f64> = paths.iter().map(|p| p[i] as f64 / t).collect();
        hits[i] = rates.iter().filter(|r| (*r - 1.0 / mu).abs() >= cfg.beta).count() as u64;
        rate_mean.push(mean(&rates));
        rate_se.push(std_dev(&rates) / (rates.len() as f64).sqrt());
    }
    Ok(CountingReport {
        config: cfg.clone(),
        mean_interarrival: mu,
        tail: TailEstimate::from_hits(cfg.t_grid.clone(), hits, cfg.replications as u64, 10),
        rate_mean,
        rate_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBoundReport {
    pub scale: f64,
    pub t0: f64,
    pub bound: usize,
    pub counts: Vec<usize>,
    pub violations: usize,
    /// Whether every intra-cluster gap equals the atom.
    pub gaps_equal: bool,
}

/// Cluster counts of independent arrival streams over `(0, t0]` against the
/// `ceil(2 t0 / M)` bound, segmenting at `γM`.
pub fn exp_cluster_bound(params: &NuParams, t0: f64, seeds: usize, seed: u64) -> Result<ClusterBoundReport> {
    if params.gamma < 0.5 {
        return Err(Error::param(format!("bound needs gamma >= 1/2, got {}", params.gamma)));
    }
    let law = ArrivalLaw::Nu(*params);
    let bound = cluster_bound(t0, params.scale);
    let mut counts = Vec::with_capacity(seeds);
    let mut gaps_equal = true;
    for s in 0..seeds {
        let mut rng = StreamKey::root(seed).named("clusters").child(s as u64).stream();
        let mut arrivals = Vec::new();
        let mut t = law.sample(&mut rng);
        while t <= t0 {
            arrivals.push(t);
            t += law.sample(&mut rng);
        }
        let clusters = detect_clusters(&arrivals, params.support_lo())?;
        gaps_equal &= clusters.iter().all(|c| c.gaps_equal(params.atom()));
        counts.push(clusters_within(&clusters, t0));
    }
    Ok(ClusterBoundReport {
        scale: params.scale,
        t0,
        bound,
        violations: counts.iter().filter(|&&c| c > bound).count(),
        counts,
        gaps_equal,
    })
}
