//! Network topology, service/arrival law assignment and static load analysis.

pub mod metric;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stochastics::{ArrivalLaw, ServiceLaw};

pub use metric::{state_distance, JobRecord, StateSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StationId(pub usize);

/// Index of an observable group. Stage classes created by [`stage_expand`]
/// keep the group of the class they replace, so observables read the same on
/// an expanded network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    LifoPreemptive,
    LifoNonpreemptive,
    Fifo,
    Ps,
    Hlpps,
    Is,
}

impl Discipline {
    pub const ALL: [Discipline; 6] = [
        Discipline::LifoPreemptive,
        Discipline::LifoNonpreemptive,
        Discipline::Fifo,
        Discipline::Ps,
        Discipline::Hlpps,
        Discipline::Is,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Discipline::LifoPreemptive => "lifo_preemptive",
            Discipline::LifoNonpreemptive => "lifo_nonpreemptive",
            Discipline::Fifo => "fifo",
            Discipline::Ps => "ps",
            Discipline::Hlpps => "hlpps",
            Discipline::Is => "is",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Discipline::ALL
            .into_iter()
            .find(|d| d.name() == norm || (norm == "lifo" && *d == Discipline::LifoPreemptive))
            .ok_or_else(|| Error::param(format!("unknown discipline '{s}'")))
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDef {
    pub label: String,
    pub station: StationId,
    pub group: GroupId,
    pub service: ServiceLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next: Option<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationDef {
    pub label: String,
    pub discipline: Discipline,
    pub classes: Vec<ClassId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    pub label: String,
    pub entry: ClassId,
    pub law: ArrivalLaw,
}

/// Scale `M` and rate gap `δ` of the two-route family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub scale: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<NetParams>,
    pub groups: Vec<String>,
    pub classes: Vec<ClassDef>,
    pub stations: Vec<StationDef>,
    pub sources: Vec<Source>,
    /// When set, every sampled duration is rounded to a positive multiple of
    /// this power of two, which keeps clock arithmetic exact.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_quantum: Option<f64>,
}

/// Per-class arrival rates and per-station loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub class_rates: Vec<f64>,
    pub station_loads: Vec<f64>,
}

impl TrafficReport {
    pub fn max_load(&self) -> f64 {
        self.station_loads.iter().copied().fold(0.0, f64::max)
    }
}

/// Fixed indices of the six-class, four-station network.
pub mod fig1 {
    use super::{ClassId, GroupId, StationId};

    pub const CLASS: [ClassId; 6] = [ClassId(0), ClassId(1), ClassId(2), ClassId(3), ClassId(4), ClassId(5)];

    /// Group index of class `k` (1-based).
    pub const fn group(k: usize) -> GroupId {
        GroupId(k - 1)
    }

    pub const STATION_I: StationId = StationId(0);
    pub const STATION_II: StationId = StationId(1);
    pub const STATION_III: StationId = StationId(2);
    pub const STATION_IV: StationId = StationId(3);
}

/// Round `x` to the nearest positive multiple of `q`.
pub fn snap_to_grid(x: f64, q: f64) -> f64 {
    (x / q).round().max(1.0) * q
}

fn check_quantum(q: f64) -> Result<()> {
    if !(q.is_finite() && q > 0.0) || q.log2().fract() != 0.0 {
        return Err(Error::param(format!("time quantum must be a positive power of two, got {q}")));
    }
    Ok(())
}

impl NetworkSpec {
    pub fn class(&self, id: ClassId) -> &ClassDef {
        &self.classes[id.0]
    }

    pub fn class_by_label(&self, label: &str) -> Option<ClassId> {
        self.classes.iter().position(|c| c.label == label).map(ClassId)
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn route_of(&self, start: ClassId) -> Vec<ClassId> {
        let mut out = vec![start];
        let mut cur = start;
        while let Some(n) = self.classes[cur.0].next {
            out.push(n);
            cur = n;
            if out.len() > self.classes.len() {
                break;
            }
        }
        out
    }

    /// Sum of service means strictly after `class` on its route.
    pub fn downstream_mean(&self, class: ClassId) -> f64 {
        self.route_of(class)[1..]
            .iter()
            .map(|c| self.classes[c.0].service.mean())
            .sum()
    }

    /// Sum of service means after `class` that stay within its group.
    pub fn downstream_mean_in_group(&self, class: ClassId) -> f64 {
        let g = self.classes[class.0].group;
        self.route_of(class)[1..]
            .iter()
            .take_while(|c| self.classes[c.0].group == g)
            .map(|c| self.classes[c.0].service.mean())
            .sum()
    }

    /// Sum of service means of classes after the last class of `class`'s group.
    pub fn downstream_mean_after_group(&self, class: ClassId) -> f64 {
        let g = self.classes[class.0].group;
        self.route_of(class)[1..]
            .iter()
            .skip_while(|c| self.classes[c.0].group == g)
            .map(|c| self.classes[c.0].service.mean())
            .sum()
    }

    pub fn with_discipline(mut self, d: Discipline) -> Self {
        for s in &mut self.stations {
            s.discipline = d;
        }
        self
    }

    /// Replace every service law by an exponential law with the same mean.
    pub fn exponentialized(mut self) -> Self {
        for c in &mut self.classes {
            c.service = ServiceLaw::Exponential { mean: c.service.mean() };
        }
        self.name = format!("{}-exp", self.name);
        self
    }

    /// Put every duration on the grid of multiples of `q`, a power of two.
    /// Deterministic means are rounded now; sampled durations are rounded by
    /// the engine.
    pub fn on_time_grid(mut self, q: f64) -> Result<Self> {
        check_quantum(q)?;
        for c in &mut self.classes {
            if let ServiceLaw::Deterministic { mean } = &mut c.service {
                *mean = snap_to_grid(*mean, q);
            }
        }
        self.time_quantum = Some(q);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.time_quantum {
            check_quantum(q)?;
        }
        if let Some(p) = self.params {
            if !(p.delta > 0.0 && p.delta < 1.0) {
                return Err(Error::param(format!("delta must lie in (0, 1), got {}", p.delta)));
            }
            if !(p.scale > 1.0) {
                return Err(Error::param(format!("scale M must exceed 1, got {}", p.scale)));
            }
        }
        if self.classes.is_empty() {
            return Err(Error::Topology("network has no classes".into()));
        }
        let n = self.classes.len();
        let mut owner = vec![None; n];
        for (si, st) in self.stations.iter().enumerate() {
            if st.classes.is_empty() {
                return Err(Error::Topology(format!("station {} has no classes", st.label)));
            }
            for c in &st.classes {
                if c.0 >= n {
                    return Err(Error::Topology(format!("station {} names unknown class {}", st.label, c.0)));
                }
                if owner[c.0].replace(si).is_some() {
                    return Err(Error::Topology(format!("class {} belongs to two stations", self.classes[c.0].label)));
                }
            }
        }
        for (ci, c) in self.classes.iter().enumerate() {
            match owner[ci] {
                Some(si) if si == c.station.0 => {}
                _ => {
                    return Err(Error::Topology(format!(
                        "class {} is not listed by its station {}",
                        c.label, c.station.0
                    )))
                }
            }
            if c.group.0 >= self.groups.len() {
                return Err(Error::Topology(format!("class {} has unknown group {}", c.label, c.group.0)));
            }
            if let Some(nx) = c.next {
                if nx.0 >= n {
                    return Err(Error::Topology(format!("class {} routes to unknown class {}", c.label, nx.0)));
                }
            }
            c.service.validate()?;
        }
        // Routes must terminate: following successors from any class exits
        // within n steps.
        for start in 0..n {
            let mut cur = ClassId(start);
            let mut steps = 0;
            while let Some(nx) = self.classes[cur.0].next {
                steps += 1;
                if steps > n {
                    return Err(Error::Topology(format!(
                        "route through class {} is cyclic",
                        self.classes[start].label
                    )));
                }
                cur = nx;
            }
        }
        if self.sources.is_empty() {
            return Err(Error::Topology("network has no external sources".into()));
        }
        for s in &self.sources {
            if s.entry.0 >= n {
                return Err(Error::Topology(format!("source {} enters unknown class", s.label)));
            }
            s.law.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: NetworkSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Service means of the two-route family for gap `δ`:
/// `[δ³, 1-δ, 1-δ+δ³, δ³, 1-δ, 1-δ+δ³]`.
pub fn fig1_means(delta: f64) -> [f64; 6] {
    let d3 = delta * delta * delta;
    [d3, 1.0 - delta, 1.0 - delta + d3, d3, 1.0 - delta, 1.0 - delta + d3]
}

/// Resolve `δ` from the explicit knob or the `δ = M^(-1/15)` coupling.
pub fn resolve_delta(scale: f64, delta: Option<f64>, couple: bool) -> Result<f64> {
    if couple {
        Ok(scale.powf(-1.0 / 15.0))
    } else {
        delta.ok_or_else(|| Error::param("delta must be given when the scale coupling is off"))
    }
}

/// The six-class LIFO network: routes 1→2→3 and 4→5→6, stations {1,6},
/// {2}, {5}, {3,4}, renewal arrivals with the clustered law at classes 1, 4.
pub fn build_fig1(scale: f64, delta: Option<f64>, couple: bool) -> Result<NetworkSpec> {
    if !(scale > 4.0) {
        return Err(Error::param(format!("scale M must exceed 4, got {scale}")));
    }
    let delta = resolve_delta(scale, delta, couple)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {delta}")));
    }
    let means = fig1_means(delta);
    if let Some(k) = means.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::param(format!("class {} mean {} is not positive", k + 1, means[k])));
    }
    let law = ArrivalLaw::nu(scale)?;
    let exp_classes = [1usize, 4];
    let station_of = [0usize, 1, 3, 3, 2, 0];
    let classes = (0..6)
        .map(|k| ClassDef {
            label: (k + 1).to_string(),
            station: StationId(station_of[k]),
            group: GroupId(k),
            service: if exp_classes.contains(&k) {
                ServiceLaw::Exponential { mean: means[k] }
            } else {
                ServiceLaw::Deterministic { mean: means[k] }
            },
            next: if k == 2 || k == 5 { None } else { Some(ClassId(k + 1)) },
        })
        .collect();
    let station = |label: &str, classes: Vec<usize>| StationDef {
        label: label.to_string(),
        discipline: Discipline::LifoPreemptive,
        classes: classes.into_iter().map(ClassId).collect(),
    };
    let spec = NetworkSpec {
        name: "fig1".into(),
        params: Some(NetParams { scale, delta }),
        groups: (1..=6).map(|k| k.to_string()).collect(),
        classes,
        stations: vec![
            station("I", vec![0, 5]),
            station("II", vec![1]),
            station("III", vec![4]),
            station("IV", vec![2, 3]),
        ],
        sources: vec![
            Source { label: "u1".into(), entry: ClassId(0), law: law.clone() },
            Source { label: "u4".into(), entry: ClassId(3), law },
        ],
        time_quantum: None,
    };
    spec.validate()?;
    let report = traffic(&spec);
    if report.max_load() >= 1.0 {
        return Err(Error::param(format!(
            "network is not subcritical at delta = {delta}: max station load {}",
            report.max_load()
        )));
    }
    Ok(spec)
}

/// Real-valued stage count `(1-δ+δ³)/δ³`.
pub fn stage_count_raw(delta: f64) -> f64 {
    let d3 = delta * delta * delta;
    (1.0 - delta + d3) / d3
}

/// The δ in (0, 1) at which the stage count equals `stages` exactly.
pub fn delta_for_stage_count(stages: usize) -> f64 {
    // (1-δ)/δ³ = L-1 is decreasing in δ.
    let target = stages as f64 - 1.0;
    let (mut lo, mut hi) = (1e-6_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (1.0 - mid) / (mid * mid * mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Integer stage count for `δ`, or an error naming the nearest δ that gives one.
pub fn stage_count(delta: f64) -> Result<usize> {
    let raw = stage_count_raw(delta);
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 && rounded >= 1.0 {
        return Ok(rounded as usize);
    }
    let candidates = [raw.floor().max(1.0) as usize, raw.ceil().max(1.0) as usize];
    let (best_l, best_d) = candidates
        .iter()
        .map(|&l| (l, delta_for_stage_count(l)))
        .min_by(|a, b| (a.1 - delta).abs().total_cmp(&(b.1 - delta).abs()))
        .expect("two candidates");
    Err(Error::param(format!(
        "stage count (1-delta+delta^3)/delta^3 = {raw:.6} is not an integer at delta = {delta}; \
         nearest valid delta = {best_d:.10} (L = {best_l})"
    )))
}

/// The Kelly-type variant: classes 3 and 6 split into `L` deterministic
/// stages each of mean `δ³`.
pub fn build_fig2(scale: f64, delta: Option<f64>, couple: bool, stages: Option<usize>) -> Result<NetworkSpec> {
    let d = resolve_delta(scale, delta, couple)?;
    if !(d > 0.0 && d < 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1), got {d}")));
    }
    let l = stage_count(d)?;
    if let Some(given) = stages {
        if given != l {
            return Err(Error::param(format!("stage count {given} does not match delta = {d} (L = {l})")));
        }
    }
    let fig1 = build_fig1(scale, Some(d), false)?;
    let mut spec = stage_expand(&fig1, ClassId(2), l)?;
    let six = spec.class_by_label("6").expect("class 6 present");
    spec = stage_expand(&spec, six, l)?;
    spec.name = "fig2".into();
    Ok(spec)
}

/// Arrival rates by flow conservation and per-station loads.
pub fn traffic(spec: &NetworkSpec) -> TrafficReport {
    let mut rates = vec![0.0; spec.classes.len()];
    for s in &spec.sources {
        let lambda = 1.0 / s.law.mean();
        for c in spec.route_of(s.entry) {
            rates[c.0] += lambda;
        }
    }
    let station_loads = spec
        .stations
        .iter()
        .map(|st| {
            st.classes
                .iter()
                .map(|c| rates[c.0] * spec.classes[c.0].service.mean())
                .sum()
        })
        .collect();
    TrafficReport {
        class_rates: rates,
        station_loads,
    }
}

/// Replace `class` by `stages` consecutive classes at the same station and
/// in the same group, preserving the aggregate mean.
///
/// Deterministic service splits into equal deterministic stages; an Erlang
/// law with `k` phases splits into `k` exponential stages. Any law is
/// accepted with `stages == 1`.
pub fn stage_expand(spec: &NetworkSpec, class: ClassId, stages: usize) -> Result<NetworkSpec> {
    if stages < 1 {
        return Err(Error::param("stage count must be at least 1"));
    }
    if class.0 >= spec.classes.len() {
        return Err(Error::Topology(format!("unknown class {}", class.0)));
    }
    let orig = &spec.classes[class.0];
    let stage_law = match (&orig.service, stages) {
        (law, 1) => law.clone(),
        (ServiceLaw::Deterministic { mean }, l) => ServiceLaw::Deterministic { mean: mean / l as f64 },
        (ServiceLaw::ErlangMixture { components }, l)
            if components.len() == 1 && components[0].stages as usize == l =>
        {
            ServiceLaw::Exponential { mean: components[0].stage_mean }
        }
        (law, l) => {
            return Err(Error::param(format!(
                "class {} with law {law:?} cannot be split into {l} stages without changing its law",
                orig.label
            )))
        }
    };

    // old index -> new index of its first (or only) class
    let mut first = Vec::with_capacity(spec.classes.len());
    let mut idx = 0;
    for i in 0..spec.classes.len() {
        first.push(idx);
        idx += if i == class.0 { stages } else { 1 };
    }
    let remap = |c: ClassId| ClassId(first[c.0]);

    let mut classes = Vec::with_capacity(idx);
    for (i, c) in spec.classes.iter().enumerate() {
        if i == class.0 {
            for s in 0..stages {
                let last = s + 1 == stages;
                classes.push(ClassDef {
                    label: format!("{}.{}", c.label, s + 1),
                    station: c.station,
                    group: c.group,
                    service: stage_law.clone(),
                    next: if last { c.next.map(remap) } else { Some(ClassId(first[i] + s + 1)) },
                });
            }
        } else {
            classes.push(ClassDef {
                next: c.next.map(remap),
                ..c.clone()
            });
        }
    }
    let stations = spec
        .stations
        .iter()
        .map(|st| {
            let mut cls = Vec::with_capacity(st.classes.len());
            for c in &st.classes {
                if *c == class {
                    cls.extend((0..stages).map(|s| ClassId(first[c.0] + s)));
                } else {
                    cls.push(remap(*c));
                }
            }
            StationDef {
                classes: cls,
                ..st.clone()
            }
        })
        .collect();
    let sources = spec
        .sources
        .iter()
        .map(|s| Source {
            entry: remap(s.entry),
            ..s.clone()
        })
        .collect();
    let out = NetworkSpec {
        name: spec.name.clone(),
        params: spec.params,
        groups: spec.groups.clone(),
        classes,
        stations,
        sources,
        time_quantum: spec.time_quantum,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1_coupled_delta() {
        let spec = build_fig1(32768.0, None, true).unwrap();
        let p = spec.params.unwrap();
        assert!((p.delta - 0.5).abs() < 1e-15);
        assert!((spec.classes[0].service.mean() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn fig1_means_and_layout() {
        let spec = build_fig1(2000.0, Some(0.1), false).unwrap();
        assert!((spec.classes[1].service.mean() - 0.9).abs() < 1e-15);
        assert!((spec.classes[2].service.mean() - 0.901).abs() < 1e-15);
        assert!(spec.classes[1].service.is_exponential());
        assert!(matches!(spec.classes[2].service, ServiceLaw::Deterministic { .. }));
        assert_eq!(spec.stations[0].classes, vec![ClassId(0), ClassId(5)]);
        assert_eq!(spec.stations[3].classes, vec![ClassId(2), ClassId(3)]);
        assert_eq!(spec.route_of(ClassId(0)), vec![ClassId(0), ClassId(1), ClassId(2)]);
        assert_eq!(spec.route_of(ClassId(3)), vec![ClassId(3), ClassId(4), ClassId(5)]);
        assert!(spec.stations.iter().all(|s| s.discipline == Discipline::LifoPreemptive));
    }

    #[test]
    fn fig1_rejects_bad_params() {
        assert!(build_fig1(2.0, Some(0.999), false).is_err());
        assert!(build_fig1(4.0, Some(0.1), false).is_err());
        // critical: 1 - δ + 2δ³ >= 1 for δ >= 1/√2
        assert!(build_fig1(100.0, Some(0.75), false).is_err());
        assert!(build_fig1(100.0, None, false).is_err());
    }

    #[test]
    fn stage_counts() {
        assert_eq!(stage_count(0.2).unwrap(), 101);
        assert_eq!(stage_count(0.5).unwrap(), 5);
        let err = stage_count(0.3).unwrap_err().to_string();
        assert!(err.contains("nearest valid delta"), "{err}");
        // The nearest valid δ really gives an integer count.
        let d = delta_for_stage_count(30);
        assert_eq!(stage_count(d).unwrap(), 30);
    }

    #[test]
    fn traffic_fig1() {
        let r = traffic(&build_fig1(100.0, Some(0.5), false).unwrap());
        assert!((r.station_loads[0] - 0.75).abs() < 1e-9);
        assert!((r.station_loads[3] - 0.75).abs() < 1e-9);
        assert!((r.station_loads[1] - 0.5).abs() < 1e-9);
        assert!((r.station_loads[2] - 0.5).abs() < 1e-9);
        let r = traffic(&build_fig1(100.0, Some(0.2), false).unwrap());
        assert!((r.station_loads[0] - 0.816).abs() < 1e-9);
    }

    #[test]
    fn fig2_layout() {
        let spec = build_fig2(100.0, Some(0.5), false, Some(5)).unwrap();
        assert_eq!(spec.classes.len(), 14);
        let labels: Vec<&str> = spec.classes.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(
            labels,
            ["1", "2", "3.1", "3.2", "3.3", "3.4", "3.5", "4", "5", "6.1", "6.2", "6.3", "6.4", "6.5"]
        );
        let st_i: Vec<&str> = spec.stations[0].classes.iter().map(|c| spec.class(*c).label.as_str()).collect();
        assert_eq!(st_i, ["1", "6.1", "6.2", "6.3", "6.4", "6.5"]);
        for c in &spec.classes[2..7] {
            assert!((c.service.mean() - 0.125).abs() < 1e-15);
            assert_eq!(c.group, GroupId(2));
        }
        assert_eq!(spec.route_of(ClassId(0)).len(), 7);
        assert!(build_fig2(100.0, Some(0.5), false, Some(6)).is_err());
        assert!(build_fig2(100.0, Some(0.3), false, None).is_err());
    }

    #[test]
    fn stage_expand_identity_and_errors() {
        let spec = build_fig1(100.0, Some(0.2), false).unwrap();
        let same = stage_expand(&spec, ClassId(2), 1).unwrap();
        assert_eq!(same.classes.len(), 6);
        assert_eq!(same.classes[2].label, "3.1");
        assert_eq!(same.classes[2].service, spec.classes[2].service);
        assert_eq!(traffic(&same), traffic(&spec));
        assert!(stage_expand(&spec, ClassId(2), 0).is_err());
        // exponential class 2 cannot be split without changing its law
        assert!(stage_expand(&spec, ClassId(1), 3).is_err());
    }

    #[test]
    fn stage_expand_deterministic_partition() {
        let spec = build_fig1(100.0, Some(0.2), false).unwrap();
        let out = stage_expand(&spec, ClassId(2), 101).unwrap();
        assert_eq!(out.classes.len(), 106);
        for c in &out.classes[2..103] {
            assert!((c.service.mean() - 0.008).abs() < 1e-15);
        }
    }

    #[test]
    fn stage_expand_erlang() {
        let mut spec = build_fig1(100.0, Some(0.2), false).unwrap();
        spec.classes[1].service = ServiceLaw::erlang(3, 0.9);
        let out = stage_expand(&spec, ClassId(1), 3).unwrap();
        for c in &out.classes[1..4] {
            assert_eq!(c.service, ServiceLaw::Exponential { mean: 0.3 });
        }
        assert!(stage_expand(&spec, ClassId(1), 2).is_err());
    }

    #[test]
    fn validate_catches_topology_errors() {
        let mut spec = build_fig1(100.0, Some(0.2), false).unwrap();
        spec.classes[2].next = Some(ClassId(0));
        assert!(matches!(spec.validate(), Err(Error::Topology(_))));

        let mut spec = build_fig1(100.0, Some(0.2), false).unwrap();
        spec.stations[1].classes.push(ClassId(0));
        assert!(spec.validate().is_err());

        let mut spec = build_fig1(100.0, Some(0.2), false).unwrap();
        spec.stations[1].classes.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        for spec in [
            build_fig1(2000.0, Some(0.1), false).unwrap(),
            build_fig2(100.0, Some(0.5), false, None).unwrap().with_discipline(Discipline::Hlpps),
        ] {
            let text = spec.to_toml().unwrap();
            let back = NetworkSpec::from_toml(&text).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn discipline_parse() {
        assert_eq!(Discipline::parse("LIFO").unwrap(), Discipline::LifoPreemptive);
        assert_eq!(Discipline::parse("lifo-nonpreemptive").unwrap(), Discipline::LifoNonpreemptive);
        assert_eq!(Discipline::parse("ps").unwrap(), Discipline::Ps);
        assert!(Discipline::parse("srpt").is_err());
    }

    #[test]
    fn time_grid_snaps_deterministic_means() {
        let q = 1.0 / 1024.0;
        let spec = build_fig1(100.0, Some(0.3), false).unwrap().on_time_grid(q).unwrap();
        assert_eq!(spec.time_quantum, Some(q));
        for c in &spec.classes {
            if let ServiceLaw::Deterministic { mean } = c.service {
                assert_eq!((mean / q).fract(), 0.0);
            }
        }
        assert_eq!(snap_to_grid(1e-9, q), q);
        assert_eq!(snap_to_grid(0.3, 0.25), 0.25);
    }

    #[test]
    fn time_quantum_must_be_power_of_two() {
        let spec = build_fig1(100.0, Some(0.3), false).unwrap();
        assert!(spec.clone().on_time_grid(0.3).is_err());
        assert!(spec.clone().on_time_grid(-0.5).is_err());
        let mut bad = spec;
        bad.time_quantum = Some(0.1);
        assert!(bad.validate().is_err());
    }
}
