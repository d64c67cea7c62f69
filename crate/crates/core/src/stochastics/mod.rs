//! Interarrival and service-time laws, and keyed random streams.

pub mod nu;
pub mod rng;

use serde::{Deserialize, Serialize};

pub use nu::{closed_form_mass, closed_form_mean, solve_nu_params, NuParams, NuSolveRecord};
pub use rng::{label_key, RngStream, StreamKey};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErlangComponent {
    pub weight: f64,
    pub stages: u32,
    pub stage_mean: f64,
}

/// Service-time law of a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceLaw {
    Deterministic { mean: f64 },
    Exponential { mean: f64 },
    ErlangMixture { components: Vec<ErlangComponent> },
}

impl ServiceLaw {
    pub fn erlang(stages: u32, mean: f64) -> Self {
        ServiceLaw::ErlangMixture {
            components: vec![ErlangComponent {
                weight: 1.0,
                stages,
                stage_mean: mean / stages as f64,
            }],
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ServiceLaw::Deterministic { mean } | ServiceLaw::Exponential { mean } => *mean,
            ServiceLaw::ErlangMixture { components } => components
                .iter()
                .map(|c| c.weight * c.stages as f64 * c.stage_mean)
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ServiceLaw::Deterministic { .. } => 0.0,
            ServiceLaw::Exponential { mean } => mean * mean,
            ServiceLaw::ErlangMixture { components } => {
                // E[X^2] of Erlang(k, θ) is k(k+1)θ².
                let second: f64 = components
                    .iter()
                    .map(|c| {
                        let k = c.stages as f64;
                        c.weight * k * (k + 1.0) * c.stage_mean * c.stage_mean
                    })
                    .sum();
                second - self.mean().powi(2)
            }
        }
    }

    pub fn is_exponential(&self) -> bool {
        match self {
            ServiceLaw::Exponential { .. } => true,
            ServiceLaw::ErlangMixture { components } => {
                components.len() == 1 && components[0].stages == 1
            }
            ServiceLaw::Deterministic { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ServiceLaw::Deterministic { mean } | ServiceLaw::Exponential { mean } => {
                if !(*mean > 0.0) || !mean.is_finite() {
                    return Err(Error::param(format!("service mean must be positive, got {mean}")));
                }
            }
            ServiceLaw::ErlangMixture { components } => {
                if components.is_empty() {
                    return Err(Error::param("Erlang mixture needs at least one component"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::param(format!("Erlang mixture weights sum to {total}, not 1")));
                }
                for c in components {
                    if !(c.weight >= 0.0) || c.stages == 0 || !(c.stage_mean > 0.0) {
                        return Err(Error::param(format!("invalid Erlang component {c:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Deterministic laws consume no randomness.
    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            ServiceLaw::Deterministic { mean } => *mean,
            ServiceLaw::Exponential { mean } => mean * -rng.open01().ln(),
            ServiceLaw::ErlangMixture { components } => {
                let comp = if components.len() == 1 {
                    &components[0]
                } else {
                    let u = rng.open01();
                    let mut acc = 0.0;
                    let mut chosen = &components[components.len() - 1];
                    for c in components {
                        acc += c.weight;
                        if u < acc {
                            chosen = c;
                            break;
                        }
                    }
                    chosen
                };
                (0..comp.stages)
                    .map(|_| comp.stage_mean * -rng.open01().ln())
                    .sum()
            }
        }
    }
}

/// Renewal interarrival law of an external source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalLaw {
    Nu(NuParams),
    Exponential { mean: f64 },
    Deterministic { value: f64 },
}

impl ArrivalLaw {
    pub fn nu(scale: f64) -> Result<Self> {
        Ok(ArrivalLaw::Nu(solve_nu_params(scale)?))
    }

    pub fn mean(&self) -> f64 {
        match self {
            // mean 1 by construction; report the solved value.
            ArrivalLaw::Nu(p) => 1.0 + p.mean_residual,
            ArrivalLaw::Exponential { mean } => *mean,
            ArrivalLaw::Deterministic { value } => *value,
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            ArrivalLaw::Nu(p) => p.sample(rng),
            ArrivalLaw::Exponential { mean } => mean * -rng.open01().ln(),
            ArrivalLaw::Deterministic { value } => *value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ArrivalLaw::Nu(p) => p.scale > 4.0 && p.beta > 0.0 && p.gamma > 0.0 && p.gamma < 2.0,
            ArrivalLaw::Exponential { mean } => *mean > 0.0 && mean.is_finite(),
            ArrivalLaw::Deterministic { value } => *value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid arrival law {self:?}")))
        }
    }
}

/// Support diagnostics for a renewal law: unbounded support, and whether
/// some convolution power dominates Lebesgue measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalConditions {
    pub unbounded: bool,
    pub density_component: bool,
}

impl ArrivalConditions {
    pub fn satisfied(&self) -> bool {
        self.unbounded && self.density_component
    }
}

pub fn validate_arrival_conditions(law: &ArrivalLaw) -> ArrivalConditions {
    match law {
        // atom plus a density on [γM, 2M]
        ArrivalLaw::Nu(_) => ArrivalConditions {
            unbounded: false,
            density_component: true,
        },
        ArrivalLaw::Exponential { .. } => ArrivalConditions {
            unbounded: true,
            density_component: true,
        },
        ArrivalLaw::Deterministic { .. } => ArrivalConditions {
            unbounded: false,
            density_component: false,
        },
    }
}
