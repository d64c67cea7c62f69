//! Idle-time and late-excursion tails of a unit-work queue fed at rate 1 + eta.

use lifonet::experiments::{exp_drift_lemma, DriftConfig};

fn main() -> lifonet::Result<()> {
    let cfg = DriftConfig {
        replications: 2000,
        ..DriftConfig::preset()
    };
    let r = exp_drift_lemma(&cfg, 1, None)?;
    for (x, p) in r.idle.thresholds.iter().zip(&r.idle.p_hat) {
        println!("P(|B| >= {x:>4}) = {p:.4}");
    }
    if let Some(fit) = &r.idle.fit {
        println!("log-slope {:.4} +/- {:.4}", fit.slope, fit.slope_se);
    }
    for (t0, p) in r.excursion.thresholds.iter().zip(&r.excursion.p_hat) {
        println!("P(excursion after t0 = {t0:>5}) = {p:.4}");
    }
    Ok(())
}
