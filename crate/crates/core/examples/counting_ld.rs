//! Deviation tails of the renewal counting process under the clustered law.

use lifonet::experiments::{exp_counting_ld, CountingConfig};

fn main() -> lifonet::Result<()> {
    let cfg = CountingConfig {
        replications: 300,
        ..CountingConfig::preset()?
    };
    let r = exp_counting_ld(&cfg, 1, None)?;
    for i in 0..cfg.t_grid.len() {
        println!(
            "t = {:>7}: P(|N_t/t - 1/mu| >= {}) = {:.3} [{:.3}, {:.3}], N_t/t = {:.4} +/- {:.4}",
            cfg.t_grid[i], cfg.beta, r.tail.p_hat[i], r.tail.lower[i], r.tail.upper[i], r.rate_mean[i], r.rate_se[i]
        );
    }
    Ok(())
}
