//! Cluster counts of the clustered arrival stream against `ceil(2 t0 / M)`.

use lifonet::experiments::exp_cluster_bound;
use lifonet::stochastics::solve_nu_params;

fn main() -> lifonet::Result<()> {
    let params = solve_nu_params(200.0)?;
    let t0 = 100.0 * params.scale;
    let r = exp_cluster_bound(&params, t0, 20, 5)?;
    println!("bound {} over (0, {t0}]", r.bound);
    println!("counts {:?}", r.counts);
    println!("violations {}, intra-cluster gaps equal to the atom: {}", r.violations, r.gaps_equal);
    Ok(())
}
