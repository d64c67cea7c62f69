//! Solve the clustered interarrival law at several scales and sample it.

use lifonet::stochastics::{closed_form_mass, closed_form_mean, solve_nu_params, ArrivalLaw, StreamKey};

fn main() -> lifonet::Result<()> {
    for scale in [10.0, 100.0, 1e3, 1e4] {
        let p = solve_nu_params(scale)?;
        println!(
            "M = {scale:>6}: beta = {:.12}, gamma = {:.12}, mass = {:.3e}, mean = {:.3e}",
            p.beta,
            p.gamma,
            closed_form_mass(scale, p.beta, p.gamma) - 1.0,
            closed_form_mean(scale, p.beta, p.gamma) - 1.0
        );
    }
    let law = ArrivalLaw::nu(100.0)?;
    let mut rng = StreamKey::root(7).named("example").stream();
    let n = 200_000;
    let total: f64 = (0..n).map(|_| law.sample(&mut rng)).sum();
    println!("empirical mean of {n} draws at M = 100: {:.4}", total / n as f64);
    Ok(())
}
