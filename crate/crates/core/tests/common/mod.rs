//! Test-side oracles, independent of the library's closed forms.
#![allow(dead_code)]

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite Gauss-Legendre integral of `f` over `[a, b]` with panels of
/// width at most `h`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let rule = gauss_legendre(12);
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (lo, hi) = (a + p as f64 * w, a + (p + 1) as f64 * w);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        total += half * rule.iter().map(|(x, wt)| wt * f(mid + half * x)).sum::<f64>();
    }
    total
}

/// Mass and mean of the clustered interarrival law by quadrature: an atom of
/// weight `1 - 1/M` at `1/M^2` plus the density `(1/M) e^{-beta (t - gamma M)}`
/// on `[gamma M, 2M]`. The density is integrated in the offset `s = t - gamma M`
/// with fine panels where it decays and coarse ones where it is negligible.
pub fn nu_moments_by_quadrature(m: f64, beta: f64, gamma: f64) -> (f64, f64) {
    let span = (2.0 - gamma) * m;
    let knee = (80.0 / beta).min(span);
    let dens = |s: f64| (-beta * s).exp() / m;
    let mass_c = integrate(dens, 0.0, knee, 0.25) + integrate(dens, knee, span.max(knee), span.max(1.0));
    let first = |s: f64| (gamma * m + s) * dens(s);
    let mean_c = integrate(first, 0.0, knee, 0.25) + integrate(first, knee, span.max(knee), span.max(1.0));
    let atom_w = 1.0 - 1.0 / m;
    (atom_w + mass_c, atom_w / (m * m) + mean_c)
}

/// Normalised CDF of the continuous part at `t`, by quadrature.
pub fn nu_continuous_cdf(m: f64, beta: f64, gamma: f64, t: f64) -> f64 {
    let span = (2.0 - gamma) * m;
    let dens = |s: f64| (-beta * s).exp();
    let x = (t - gamma * m).clamp(0.0, span);
    integrate(dens, 0.0, x, 0.25) / integrate(dens, 0.0, span, 0.25)
}

use lifonet::engine::{InitialCondition, RecordKind, Simulation};
use lifonet::model::{build_fig1, build_fig2, ClassId, Discipline, NetworkSpec, StationId};
use lifonet::stochastics::ServiceLaw;

/// Randomized network and initial condition for the invariant fuzz.
#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub staged: bool,
    pub scale: f64,
    pub delta: f64,
    pub jobs: usize,
    pub mirrored: bool,
    pub seed: u64,
}

impl FuzzCase {
    /// Draw a case from uniforms in [0, 1), with `M` log-uniform on
    /// `[10, max_scale]`.
    pub fn from_uniforms(u: [f64; 5], seed: u64, max_scale: f64) -> Self {
        let staged = u[0] < 0.25;
        FuzzCase {
            staged,
            scale: 10.0 * (max_scale / 10.0).powf(u[1]),
            delta: if staged { 0.5 } else { 0.1 + 0.5 * u[2] },
            jobs: (u[3] * 200.0) as usize,
            mirrored: u[4] < 0.5,
            seed,
        }
    }

    pub fn network(&self, d: Discipline) -> NetworkSpec {
        let spec = if self.staged {
            build_fig2(self.scale, Some(self.delta), false, None)
        } else {
            build_fig1(self.scale, Some(self.delta), false)
        };
        spec.unwrap().with_discipline(d)
    }
}

/// Run `events` steps checking, after every step, the engine's structural
/// invariants (allocation, selection rule, flow conservation, service
/// accounting), time monotonicity, and work conservation. The total
/// workload counts downstream work at class means, so it jumps only when a
/// job enters from outside or enters a class with random service; every
/// other step lowers it at the drain rate, which is the number of busy
/// single-server stations (jobs in service for IS).
pub fn fuzz_run(case: &FuzzCase, d: Discipline, events: u64) -> Result<(), String> {
    let spec = case.network(d);
    let head = spec.class_by_label(if case.mirrored { "5" } else { "2" }).unwrap_or(ClassId(0));
    let init = InitialCondition::empty().with_jobs(head, case.jobs);
    let mut sim = Simulation::new(&spec, &init, case.seed).map_err(|e| e.to_string())?;
    sim.check_invariants()?;
    // rounding in the running workload scales with the largest value it held
    let mut peak = sim.workloads().total;
    for k in 0..events {
        let (t0, w0, rate) = (sim.clock(), sim.workloads().total, sim.work_drain_rate());
        peak = peak.max(w0);
        let busy: f64 = (0..spec.stations.len())
            .map(|s| {
                let n = sim.station_len(StationId(s)) as f64;
                if d == Discipline::Is {
                    n
                } else {
                    n.min(1.0)
                }
            })
            .sum();
        if (rate - busy).abs() > 1e-12 {
            return Err(format!("step {k}: drain rate {rate}, busy {busy}"));
        }
        if !sim.step() {
            return Err(format!("step {k}: no pending event"));
        }
        let t1 = sim.clock();
        if t1 < t0 {
            return Err(format!("step {k}: clock went back from {t0} to {t1}"));
        }
        let recs = sim.last_records();
        // an external arrival is the only step that opens with an arrival record
        let external = recs.first().is_some_and(|r| r.kind == RecordKind::Arrival);
        let sampled = recs.iter().any(|r| {
            r.kind == RecordKind::Arrival && !matches!(spec.class(r.class).service, ServiceLaw::Deterministic { .. })
        });
        let w1 = sim.workloads().total;
        if !external && !sampled {
            let want = (w0 - rate * (t1 - t0)).max(0.0);
            if (w1 - want).abs() > 1e-9 * (1.0 + peak) {
                return Err(format!("step {k}: workload {w1}, conservation gives {want}"));
            }
        }
        sim.check_invariants().map_err(|e| format!("step {k}: {e}"))?;
        if k % 1000 == 0 {
            let exact = sim.exact_workloads().total;
            if (exact - w1).abs() > 1e-9 * (1.0 + peak) {
                return Err(format!("step {k}: incremental workload {w1}, recomputed {exact}"));
            }
        }
    }
    Ok(())
}
