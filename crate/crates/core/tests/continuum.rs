use levy_transport::bessel_kernel::kernel_h;
use levy_transport::continuum_limit::{
    centre_of_mass, delta_pairing, discrete_vs_continuum_report, l2_distance, pde_characteristics_solution,
    rescaled_kernel, rescaled_kernel_pairing, upwind_pde_oracle, LatticeScaling, PdeConfig, Profile,
    ReportQuantity,
};
use levy_transport::levy_driver::{uniform_grid, CumulantSpec, LevyPath};
use levy_transport::stationary_analysis::moments;
use proptest::prelude::*;

fn gaussian_bump(centre: f64, width: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| (-((r - centre) / width).powi(2) / 2.0).exp()
}

#[test]
fn rescaled_kernel_concentrates_at_half_x() {
    let f = gaussian_bump(0.5, 0.1);
    for nu in [0.0, 1.0] {
        let target = f(0.5) * (-nu * 0.5f64).exp();
        let mut last = f64::INFINITY;
        for h in [0.1, 0.05, 0.025, 0.0125] {
            let ls = LatticeScaling::new(h, 1.0).unwrap();
            let v = rescaled_kernel_pairing(ls, nu, &f, 3.0);
            let err = (v - target).abs();
            assert!(err < last, "nu={nu} h={h}: {v} vs {target}");
            if h <= 0.05 {
                assert!(err < 0.05 * target, "nu={nu} h={h}: {v} vs {target}");
            }
            last = err;
        }
    }
}

#[test]
fn rescaled_kernel_has_unit_mass() {
    // n int_0^inf J_n(t) / t dt = 1 for every n
    for h in [0.5, 0.1] {
        let ls = LatticeScaling::new(h, 1.0).unwrap();
        let mass = rescaled_kernel_pairing(ls, 0.0, |_| 1.0, 400.0);
        assert!((mass - 1.0).abs() < 0.02, "h={h}: {mass}");
    }
}

#[test]
fn non_integer_order_is_continuous() {
    let near = LatticeScaling::new(1.0 / (3.0 + 1e-7), 1.0).unwrap();
    assert!(near.shell().is_none());
    let exact = LatticeScaling::new(1.0 / 3.0, 1.0).unwrap();
    for r in [0.2, 0.5, 1.3] {
        let a = rescaled_kernel(near, 0.2, r);
        let b = rescaled_kernel(exact, 0.2, r);
        assert!((a - b).abs() < 1e-5 * b.abs().max(1.0), "r={r}: {a} vs {b}");
    }
}

#[test]
fn h_one_matches_every_shell() {
    for n in 1..6u32 {
        let ls = LatticeScaling::new(1.0, n as f64).unwrap();
        assert_eq!(rescaled_kernel(ls, 0.0, 2.5), kernel_h(n, 0.0, 2.5));
    }
}

#[test]
fn delta_family_converges_monotonically() {
    let f = |x: f64| {
        let u = x / 0.5;
        if u.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - u * u).powi(3)
        }
    };
    let mut last = f64::INFINITY;
    for mu in [25.0, 50.0, 100.0, 200.0] {
        let err = (delta_pairing(mu, f, -0.5, 0.5).unwrap() - 1.0).abs();
        assert!(err < last, "mu={mu}: {err}");
        last = err;
    }
    assert!(last < 0.02);
}

fn bump_config(nu: f64, eps: f64, width: f64) -> PdeConfig {
    PdeConfig::new(nu, eps, Profile::Bump { center: 1.0, radius: 0.5, height: 1.0 }, Some(width)).unwrap()
}

#[test]
fn zero_forcing_transports_the_profile() {
    let cfg = bump_config(0.0, 0.5, 0.1);
    let path = LevyPath::zero(uniform_grid(0.0, 1.0, 10)).unwrap();
    for (t, x) in [(0.3, 1.4), (0.5, 2.2), (1.0, 2.9)] {
        let v = pde_characteristics_solution(&cfg, &path, t, x, 0.0).unwrap();
        assert_eq!(v, cfg.phi.eval(x - 2.0 * t));
    }
}

#[test]
fn drift_stationary_value_tends_to_half_the_damped_slope() {
    let (nu, eps, x) = (0.7, 0.4, 2.0);
    let s = -(x / 2.0) - 1.0;
    let path = LevyPath::linear(uniform_grid(s, 0.0, 40_000), 1.0).unwrap();
    let target = 0.5 * (-nu * (x - eps) / 2.0).exp();
    let mut last = f64::INFINITY;
    for w in [0.15, 0.05, 0.01] {
        let cfg = PdeConfig::new(nu, eps, Profile::Zero, Some(w)).unwrap();
        let v = pde_characteristics_solution(&cfg, &path, 0.0, x, s).unwrap();
        let err = (v - target).abs();
        assert!(err < last, "w={w}: {v} vs {target}");
        last = err;
    }
    assert!(last < 1e-4, "{last}");
}

#[test]
fn upwind_advection_error_is_first_order() {
    let cfg = bump_config(0.5, 0.5, 0.1);
    let mut errors = Vec::new();
    for dx in [0.01f64, 0.005, 0.0025] {
        let dt = 0.25 * dx;
        let path = LevyPath::zero(uniform_grid(0.0, 1.0, (1.0 / dt).round() as usize)).unwrap();
        let field = upwind_pde_oracle(&cfg, &path, dx, 4.0, usize::MAX).unwrap();
        let exact: Vec<f64> = field.xs.iter().map(|&x| (-0.5f64).exp() * cfg.phi.eval(x - 2.0)).collect();
        errors.push(l2_distance(field.last(), &exact, dx));
        // centre of mass moves at speed 2
        let com = centre_of_mass(&field.xs, field.last());
        assert!((com - 3.0).abs() < dx, "dx={dx}: {com}");
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..=2.4).contains(&ratio), "{errors:?}");
    }
}

#[test]
fn upwind_matches_characteristics_under_drift_forcing() {
    let cfg = PdeConfig::new(0.5, 0.5, Profile::Zero, Some(0.2)).unwrap();
    let fine = LevyPath::linear(uniform_grid(0.0, 1.0, 20_000), 1.0).unwrap();
    let mut errors = Vec::new();
    for dx in [0.01f64, 0.005, 0.0025] {
        let dt = 0.25 * dx;
        let path = LevyPath::linear(uniform_grid(0.0, 1.0, (1.0 / dt).round() as usize), 1.0).unwrap();
        let field = upwind_pde_oracle(&cfg, &path, dx, 4.0, usize::MAX).unwrap();
        let exact: Vec<f64> = field
            .xs
            .iter()
            .map(|&x| pde_characteristics_solution(&cfg, &fine, 1.0, x, 0.0).unwrap())
            .collect();
        errors.push(l2_distance(field.last(), &exact, dx));
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..=2.4).contains(&ratio), "{errors:?}");
    }
}

#[test]
fn upwind_refuses_cfl_violation() {
    let cfg = bump_config(0.0, 0.5, 0.1);
    let path = LevyPath::zero(uniform_grid(0.0, 1.0, 100)).unwrap();
    assert!(upwind_pde_oracle(&cfg, &path, 0.01, 2.0, 1).is_err());
}

#[test]
fn report_gaussian_trend() {
    let cfg = PdeConfig::new(1.0, 0.25, Profile::Zero, None).unwrap();
    let spec = CumulantSpec::gaussian(1.0);
    let report = discrete_vs_continuum_report(&spec, 1.0, 2.0, &[1.0, 0.5, 0.25, 0.125], &cfg).unwrap();
    assert_eq!(report.quantity, ReportQuantity::Variance);
    let ratios: Vec<f64> = report.rows.iter().map(|r| r.ratio.unwrap()).collect();
    let up = ratios.windows(2).all(|w| w[1] > w[0]);
    let down = ratios.windows(2).all(|w| w[1] < w[0]);
    assert!(up || down, "{ratios:?}");
    let m = moments(&spec, 2, 2, 1.0).unwrap();
    assert_eq!(report.rows[0].lattice_value.unwrap(), m.covariance);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("h,n,lattice_value,continuum_value,ratio,regularization\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn report_stable_without_lattice_law() {
    let cfg = PdeConfig::new(0.0, 0.25, Profile::Zero, None).unwrap();
    let report =
        discrete_vs_continuum_report(&CumulantSpec::stable(0.5, 1.0), 0.0, 1.0, &[0.5, 0.25], &cfg).unwrap();
    for row in &report.rows {
        assert!(row.lattice_value.is_none() && row.ratio.is_none());
        assert!(row.continuum_value.is_finite() && row.continuum_value > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn homogeneous_support_moves_at_speed_two(t in 0.05f64..1.0) {
        let cfg = bump_config(0.0, 0.5, 0.1);
        let path = LevyPath::zero(uniform_grid(0.0, 1.0, 4)).unwrap();
        // support [0.5, 1.5] moves to [0.5 + 2t, 1.5 + 2t]
        let inside = pde_characteristics_solution(&cfg, &path, t, 1.0 + 2.0 * t, 0.0).unwrap();
        let outside = pde_characteristics_solution(&cfg, &path, t, 1.5 + 2.0 * t + 1e-9, 0.0).unwrap();
        prop_assert!((inside - 1.0).abs() < 1e-12);
        prop_assert_eq!(outside, 0.0);
    }
}
