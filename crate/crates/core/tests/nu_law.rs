mod common;

use common::{gauss_legendre, integrate, nu_continuous_cdf, nu_moments_by_quadrature};
use lifonet::stochastics::{closed_form_mass, closed_form_mean, solve_nu_params, ArrivalLaw, StreamKey};

#[test]
fn quadrature_rule_is_exact_on_polynomials() {
    let rule = gauss_legendre(12);
    assert!((rule.iter().map(|r| r.1).sum::<f64>() - 2.0).abs() < 1e-14);
    let v = integrate(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 0.5);
    assert!((v - (32.0 - 8.0)).abs() < 1e-12);
    assert!((integrate(|x| (-x).exp(), 0.0, 50.0, 0.25) - (1.0 - (-50.0f64).exp())).abs() < 1e-14);
}

#[test]
fn solved_law_has_unit_mass_and_mean_by_quadrature() {
    for m in [10.0, 50.0, 100.0, 1e3, 1e4, 1e5] {
        let p = solve_nu_params(m).unwrap();
        let (mass, mean) = nu_moments_by_quadrature(m, p.beta, p.gamma);
        assert!((mass - 1.0).abs() <= 1e-10, "M = {m}: mass {mass}");
        assert!((mean - 1.0).abs() <= 1e-8, "M = {m}: mean {mean}");
    }
}

#[test]
fn closed_forms_agree_with_quadrature_off_solution() {
    for (m, b, g) in [(100.0, 0.7, 0.9), (1e3, 1.3, 1.1), (20.0, 0.2, 0.5)] {
        let (mass, mean) = nu_moments_by_quadrature(m, b, g);
        assert!((closed_form_mass(m, b, g) - mass).abs() < 1e-12, "mass at {m}");
        assert!((closed_form_mean(m, b, g) - mean).abs() < 1e-9 * mean, "mean at {m}");
    }
}

#[test]
fn parameters_approach_one() {
    let p = solve_nu_params(1e4).unwrap();
    assert!((p.beta - 1.0).abs() <= 1e-3);
    assert!((p.gamma - 1.0).abs() <= 1e-2);
}

#[test]
fn sample_moments_match_the_law() {
    let law = ArrivalLaw::nu(100.0).unwrap();
    let ArrivalLaw::Nu(p) = &law else { unreachable!() };
    let mut rng = StreamKey::root(3).named("nu-moments").stream();
    let n = 2_000_000;
    let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() < 5.0 * (var / n as f64).sqrt(), "mean {mean}");
    let atoms = xs.iter().filter(|&&x| x == p.atom()).count() as f64 / n as f64;
    let sd = (p.atom_prob() * (1.0 - p.atom_prob()) / n as f64).sqrt();
    assert!((atoms - p.atom_prob()).abs() < 5.0 * sd, "atom frequency {atoms}");
}

#[test]
fn continuous_part_matches_oracle_cdf() {
    let p = solve_nu_params(100.0).unwrap();
    let mut rng = StreamKey::root(4).named("nu-cdf").stream();
    let n = 20_000;
    let mut xs: Vec<f64> = (0..n).map(|_| p.sample_continuous(&mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = nu_continuous_cdf(p.scale, p.beta, p.gamma, x);
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    // one-sample KS at level 0.001
    assert!(d < 1.95 / (n as f64).sqrt(), "KS distance {d}");
    for t in [p.support_lo() + 0.5, p.support_lo() + 3.0, p.support_hi()] {
        assert!((p.continuous_cdf(t) - nu_continuous_cdf(p.scale, p.beta, p.gamma, t)).abs() < 1e-12);
    }
}
