//! Group-count distributions under PS and HLPPS with exponential service.

use lifonet::experiments::{exp_ps_hlpps, PsHlppsConfig};
use lifonet::model::build_fig1;

fn main() -> lifonet::Result<()> {
    let spec = build_fig1(10.0, Some(0.5), false)?.exponentialized();
    let cfg = PsHlppsConfig {
        replications: 300,
        repeats: 5,
        ..PsHlppsConfig::preset()
    };
    let r = exp_ps_hlpps(&spec, &cfg, 1, None)?;
    for k in &r.repeats {
        let d: Vec<String> = k.statistics.iter().map(|d| format!("{d:.3}")).collect();
        println!("repeat {}: D = [{}], critical {:.3}, pass {}", k.repeat, d.join(", "), k.critical, k.pass);
    }
    println!("pass fraction {:.2}", r.pass_fraction);
    Ok(())
}
