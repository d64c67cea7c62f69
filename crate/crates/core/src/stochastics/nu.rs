//! The clustered interarrival law.
//!
//! With probability `1 - 1/M` an interarrival time is the short atom `1/M²`;
//! otherwise it is drawn from the density `(1/M) exp(-β (t - γM))` on
//! `[γM, 2M]`. The pair `(β, γ)` is fixed by requiring total mass 1 and
//! mean 1, which is solved here from closed-form antiderivatives.

use serde::{Deserialize, Serialize};

use super::rng::RngStream;
use crate::error::{Error, Result};

const MAX_NEWTON_ITERS: usize = 60;
const MAX_BISECT_ITERS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-13;

/// Solved parameters of the interarrival law for a given scale `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuParams {
    pub scale: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mass_residual: f64,
    pub mean_residual: f64,
}

/// JSON-exportable solver record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NuSolveRecord {
    #[serde(rename = "M")]
    pub m: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mass_residual: f64,
    pub mean_residual: f64,
}

impl From<&NuParams> for NuSolveRecord {
    fn from(p: &NuParams) -> Self {
        NuSolveRecord {
            m: p.scale,
            beta: p.beta,
            gamma: p.gamma,
            mass_residual: p.mass_residual,
            mean_residual: p.mean_residual,
        }
    }
}

/// Total mass of the law at `(β, γ)`, atom included.
pub fn closed_form_mass(scale: f64, beta: f64, gamma: f64) -> f64 {
    let span = scale * (2.0 - gamma);
    (1.0 - 1.0 / scale) + (-(-beta * span).exp_m1()) / (scale * beta)
}

/// Mean of the law at `(β, γ)`, atom included.
pub fn closed_form_mean(scale: f64, beta: f64, gamma: f64) -> f64 {
    let lo = gamma * scale;
    let hi = 2.0 * scale;
    let tail = (-beta * (hi - lo)).exp();
    let b2 = beta * beta;
    let continuous = (lo / beta + 1.0 / b2 - tail * (hi / beta + 1.0 / b2)) / scale;
    (1.0 - 1.0 / scale) / (scale * scale) + continuous
}

/// Scaled residuals: `h1 = M (mass - 1)` and `h2 = mean - 1`, with Jacobian.
fn residuals(scale: f64, beta: f64, gamma: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let span = scale * (2.0 - gamma);
    let e = (-beta * span).exp();
    let one_minus_e = -(-beta * span).exp_m1();
    let h1 = one_minus_e / beta - 1.0;
    let d1_db = span * e / beta - one_minus_e / (beta * beta);
    let d1_dg = -scale * e;

    let h2 = closed_form_mean(scale, beta, gamma) - 1.0;
    let b2 = beta * beta;
    let b3 = b2 * beta;
    let hi = 2.0 * scale;
    let lo = gamma * scale;
    let de_db = -span * e;
    let d2_db = (-lo / b2 - 2.0 / b3 - de_db * (hi / beta + 1.0 / b2) + e * (hi / b2 + 2.0 / b3)) / scale;
    let d2_dg = 1.0 / beta - e * (2.0 * scale + 1.0 / beta);
    ([h1, h2], [[d1_db, d1_dg], [d2_db, d2_dg]])
}

fn norm(h: [f64; 2]) -> f64 {
    h[0].abs().max(h[1].abs())
}

fn newton(scale: f64) -> Option<(f64, f64)> {
    let (mut beta, mut gamma) = (1.0, 1.0 - 1.0 / scale);
    let (mut h, mut jac) = residuals(scale, beta, gamma);
    for _ in 0..MAX_NEWTON_ITERS {
        if norm(h) <= RESIDUAL_TOL {
            return Some((beta, gamma));
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det == 0.0 {
            return None;
        }
        let db = (h[0] * jac[1][1] - h[1] * jac[0][1]) / det;
        let dg = (jac[0][0] * h[1] - jac[1][0] * h[0]) / det;
        let mut step = 1.0;
        loop {
            let nb = beta - step * db;
            let ng = gamma - step * dg;
            if nb > 0.0 && ng > 0.0 && ng < 2.0 {
                let (nh, nj) = residuals(scale, nb, ng);
                if norm(nh) < norm(h) || norm(nh) <= RESIDUAL_TOL {
                    beta = nb;
                    gamma = ng;
                    h = nh;
                    jac = nj;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return if norm(h) <= 1e-11 { Some((beta, gamma)) } else { None };
            }
        }
    }
    (norm(h) <= 1e-11).then_some((beta, gamma))
}

/// For fixed γ, β solves `β = 1 - exp(-β M (2-γ))` (fixed point, contraction
/// for the spans that occur with `M > 4`).
fn beta_for_gamma(scale: f64, gamma: f64) -> f64 {
    let span = scale * (2.0 - gamma);
    let mut beta = 1.0;
    for _ in 0..500 {
        let next = -(-beta * span).exp_m1();
        if (next - beta).abs() < 1e-16 {
            return next;
        }
        beta = next;
    }
    beta
}

fn bisection(scale: f64) -> (f64, f64) {
    // Mean is increasing in γ once β is slaved to the mass constraint.
    let f = |g: f64| closed_form_mean(scale, beta_for_gamma(scale, g), g) - 1.0;
    let (mut lo, mut hi) = (0.0, 1.999);
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let g = 0.5 * (lo + hi);
    (beta_for_gamma(scale, g), g)
}

/// Solve for `(β, γ)` at scale `M > 4`.
pub fn solve_nu_params(scale: f64) -> Result<NuParams> {
    if !(scale > 4.0) || !scale.is_finite() {
        return Err(Error::param(format!("interarrival scale M must exceed 4, got {scale}")));
    }
    let (beta, gamma) = newton(scale).unwrap_or_else(|| bisection(scale));
    let params = NuParams {
        scale,
        beta,
        gamma,
        mass_residual: closed_form_mass(scale, beta, gamma) - 1.0,
        mean_residual: closed_form_mean(scale, beta, gamma) - 1.0,
    };
    if params.mass_residual.abs() > 1e-10 || params.mean_residual.abs() > 1e-10 {
        return Err(Error::SolverDiverged {
            scale,
            beta,
            gamma,
            mass_residual: params.mass_residual,
            mean_residual: params.mean_residual,
        });
    }
    Ok(params)
}

impl NuParams {
    pub fn atom(&self) -> f64 {
        1.0 / (self.scale * self.scale)
    }

    pub fn atom_prob(&self) -> f64 {
        1.0 - 1.0 / self.scale
    }

    pub fn support_lo(&self) -> f64 {
        self.gamma * self.scale
    }

    pub fn support_hi(&self) -> f64 {
        2.0 * self.scale
    }

    /// Continuous density (unnormalised part of the law) at `t`.
    pub fn density(&self, t: f64) -> f64 {
        if t < self.support_lo() || t > self.support_hi() {
            0.0
        } else {
            (-self.beta * (t - self.support_lo())).exp() / self.scale
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let u = rng.open01();
        self.sample_with_branch(u, rng)
    }

    /// Sample given the branch-selecting uniform `u`; `u < 1 - 1/M` selects
    /// the atom.
    pub fn sample_with_branch(&self, u: f64, rng: &mut RngStream) -> f64 {
        if u < self.atom_prob() {
            self.atom()
        } else {
            self.sample_continuous(rng)
        }
    }

    /// `γM + Exp(β)`, resampled until it lands in `[γM, 2M]`.
    pub fn sample_continuous(&self, rng: &mut RngStream) -> f64 {
        let lo = self.support_lo();
        let hi = self.support_hi();
        loop {
            let t = lo + rng.exp_rate(self.beta);
            if t <= hi {
                return t;
            }
        }
    }

    /// CDF of the normalised continuous part.
    pub fn continuous_cdf(&self, t: f64) -> f64 {
        let lo = self.support_lo();
        let hi = self.support_hi();
        if t <= lo {
            return 0.0;
        }
        if t >= hi {
            return 1.0;
        }
        let num = -(-self.beta * (t - lo)).exp_m1();
        let den = -(-self.beta * (hi - lo)).exp_m1();
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_scale() {
        assert!(solve_nu_params(4.0).is_err());
        assert!(solve_nu_params(2.0).is_err());
        assert!(solve_nu_params(f64::NAN).is_err());
    }

    #[test]
    fn residuals_tiny() {
        for m in [5.0, 10.0, 100.0, 1e3, 1e4, 1e5] {
            let p = solve_nu_params(m).unwrap();
            assert!(p.mass_residual.abs() <= 1e-10, "{m}: {p:?}");
            assert!(p.mean_residual.abs() <= 1e-10, "{m}: {p:?}");
        }
    }

    #[test]
    fn approaches_one_for_large_scale() {
        let p = solve_nu_params(1e4).unwrap();
        assert!((p.beta - 1.0).abs() <= 1e-3);
        assert!((p.gamma - 1.0).abs() <= 1e-2);
        // γ increases toward 1 with M.
        let g: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&m| solve_nu_params(m).unwrap().gamma)
            .collect();
        assert!(g[0] < g[1] && g[1] < g[2]);
        assert!(g[2] < 1.0);
    }

    #[test]
    fn newton_and_bisection_agree() {
        for m in [6.0, 50.0, 1000.0] {
            let (b1, g1) = newton(m).unwrap();
            let (b2, g2) = bisection(m);
            assert!((b1 - b2).abs() < 1e-9, "{m}: {b1} vs {b2}");
            assert!((g1 - g2).abs() < 1e-9, "{m}: {g1} vs {g2}");
        }
    }

    #[test]
    fn atom_branch_exact() {
        let p = solve_nu_params(100.0).unwrap();
        let mut rng = RngStream::new(1);
        assert_eq!(p.sample_with_branch(0.5, &mut rng), 1.0 / 10_000.0);
        for _ in 0..10_000 {
            let t = p.sample_with_branch(0.999_999, &mut rng);
            assert!(t >= p.support_lo() && t <= p.support_hi());
        }
    }

    #[test]
    fn cdf_endpoints() {
        let p = solve_nu_params(100.0).unwrap();
        assert_eq!(p.continuous_cdf(0.0), 0.0);
        assert_eq!(p.continuous_cdf(1e9), 1.0);
        let mid = p.continuous_cdf(p.support_lo() + 1.0);
        assert!((mid - (1.0 - (-p.beta).exp())).abs() < 1e-12);
    }
}
