use lifonet::engine::{InitialCondition, Simulation};
use lifonet::model::{build_fig1, build_fig2, stage_count, traffic, ClassId, GroupId, NetworkSpec};
use lifonet::stochastics::ServiceLaw;

#[test]
fn fig1_loads_follow_the_service_means() {
    for delta in [0.05, 0.1, 0.2, 0.3, 0.5] {
        let spec = build_fig1(1000.0, Some(delta), false).unwrap();
        let r = traffic(&spec);
        let d3 = delta * delta * delta;
        let want = [1.0 - delta + 2.0 * d3, 1.0 - delta, 1.0 - delta, 1.0 - delta + 2.0 * d3];
        for (got, want) in r.station_loads.iter().zip(want) {
            assert!((got - want).abs() <= 1e-12, "delta {delta}: {got} vs {want}");
        }
        assert!(r.class_rates.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }
}

#[test]
fn staged_network_keeps_loads_and_routes() {
    for delta in [0.5, 0.2] {
        let a = build_fig1(100.0, Some(delta), false).unwrap();
        let b = build_fig2(100.0, Some(delta), false, None).unwrap();
        let l = stage_count(delta).unwrap();
        assert_eq!(b.classes.len(), 4 + 2 * l);
        for (x, y) in traffic(&a).station_loads.iter().zip(traffic(&b).station_loads) {
            assert!((x - y).abs() <= 1e-12);
        }
        let route = b.route_of(b.class_by_label("1").unwrap());
        let labels: Vec<&str> = route.iter().map(|c| b.class(*c).label.as_str()).collect();
        assert_eq!(labels[..3], ["1", "2", "3.1"]);
        assert_eq!(*labels.last().unwrap(), format!("3.{l}"));
        assert!(route[2..].iter().all(|c| b.class(*c).group == GroupId(2)));
    }
}

#[test]
fn network_round_trips_through_toml() {
    let spec = build_fig2(100.0, Some(0.5), false, None).unwrap();
    let back = NetworkSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn coupled_delta_comes_from_the_scale() {
    let spec = build_fig1(32768.0, None, true).unwrap();
    let ServiceLaw::Deterministic { mean } = spec.classes[0].service else { panic!() };
    assert!((mean - 0.125).abs() < 1e-12);
}

#[test]
fn initial_total_workload_is_the_remaining_route_work() {
    let (delta, n) = (0.1, 4000);
    let spec = build_fig1(2000.0, Some(delta), false).unwrap();
    let sim = Simulation::new(&spec, &InitialCondition::empty().with_jobs(ClassId(1), n), 5).unwrap();
    let (m2, m3) = (1.0 - delta, 1.0 - delta + delta.powi(3));
    let w = sim.exact_workloads();
    // exponential class-2 work has standard deviation m2 per job
    assert!((w.total - n as f64 * (m2 + m3)).abs() < 5.0 * m2 * (n as f64).sqrt(), "{w:?}");
    assert_eq!(w.w3, 0.0);
    assert_eq!(w.w6, 0.0);
    assert!((sim.workloads().total - w.total).abs() < 1e-9 * w.total);
    let served: f64 = sim.jobs_with_residuals().iter().map(|(_, r)| r).sum();
    assert!((w.total - served - n as f64 * m3).abs() < 1e-9 * w.total);
}
