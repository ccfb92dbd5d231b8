use levy_transport::bessel_kernel::{bessel_j, kernel_h, propagator};
use levy_transport::euler_oracle::{self, SchemeConfig, ShellState};
use levy_transport::exact_solver::{
    homogeneous_solution, homogeneous_state, solve, solve_parts, stochastic_convolution,
    InitialData, SolveOptions,
};
use levy_transport::levy_driver::{sample_path, uniform_grid, CumulantSpec, LevyPath};
use levy_transport::quadrature::{gauss_kronrod, Tolerance};
use proptest::prelude::*;

#[test]
fn odd_ones_invariant_up_to_t20() {
    for k in 0..=40 {
        let t = 0.5 * k as f64;
        let state = homogeneous_state(&InitialData::OddOnes, 12, 0.0, t, None).unwrap();
        for (i, v) in state.iter().enumerate() {
            let expect = ((i + 1) % 2) as f64;
            assert!((v - expect).abs() < 1e-8, "t={t} n={}: {v}", i + 1);
        }
    }
}

#[test]
fn even_ones_tends_to_one_in_the_shell_index() {
    let t = 5.0;
    let mut last_err = f64::INFINITY;
    for n in [20u32, 50, 100, 200] {
        let v = homogeneous_solution(&InitialData::EvenOnes, 2 * n, 0.0, t, None).unwrap();
        // J_0 + 2 sum_{j<n} J_2j + J_2n, summed directly
        let x = 2.0 * t;
        let partial: f64 = bessel_j(0, x)
            + 2.0 * (1..n).map(|j| bessel_j(2 * j, x)).sum::<f64>()
            + bessel_j(2 * n, x);
        assert!((v - partial).abs() < 1e-10);
        let err = (v - 1.0).abs();
        assert!(err <= last_err + 1e-12);
        last_err = err;
    }
    assert!(last_err < 1e-10);
}

#[test]
fn even_ones_small_at_large_time() {
    for n in 1..4 {
        let v = homogeneous_solution(&InitialData::EvenOnes, 2 * n, 0.0, 1000.0, None).unwrap();
        assert!(v.abs() <= 0.05, "n={n}: {v}");
    }
}

#[test]
fn semigroup_of_the_propagator() {
    let (t1, t2) = (1.3, 2.1);
    let m_cut = 80;
    for n in 1..6 {
        for m in 1..6 {
            let composed: f64 = (1..=m_cut)
                .map(|k| propagator(n, k, 0.0, t2) * propagator(k, m, 0.0, t1))
                .sum();
            let direct = propagator(n, m, 0.0, t1 + t2);
            assert!((composed - direct).abs() < 1e-8, "n={n} m={m}");
        }
    }
}

#[test]
fn viscosity_scales_the_homogeneous_part() {
    let init = InitialData::Vector { values: vec![0.3, -1.0, 2.0, 0.5] };
    for t in [0.0, 0.7, 4.0] {
        let a = homogeneous_state(&init, 6, 0.0, t, None).unwrap();
        let b = homogeneous_state(&init, 6, 0.8, t, None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(((-0.8 * t).exp() * x - y).abs() < 1e-15);
        }
    }
}

fn brownian(dt: f64, horizon: f64, seed: u64) -> LevyPath {
    let steps = (horizon / dt).round() as usize;
    sample_path(&CumulantSpec::gaussian(1.0), uniform_grid(0.0, horizon, steps), seed).unwrap()
}

#[test]
fn linearity_in_data_and_driver() {
    let path = brownian(0.01, 2.0, 5);
    let init = InitialData::Vector { values: vec![1.0, -0.5, 0.25] };
    let times = [0.0, 0.5, 2.0];
    let (hom, conv) = solve_parts(&init, &path, 0.2, &times, 5, SolveOptions::default()).unwrap();
    let (a, c) = (2.5, -0.75);
    let scaled_init = InitialData::Vector { values: vec![a, -0.5 * a, 0.25 * a] };
    let both = solve(&scaled_init, &path.scaled(c), 0.2, &times, 5, SolveOptions::default()).unwrap();
    for i in 0..times.len() {
        for n in 1..=5 {
            let expect = a * hom.get(i, n) + c * conv.get(i, n);
            assert!((both.get(i, n) - expect).abs() < 1e-13);
        }
    }
}

#[test]
fn zero_inputs_give_zero_solution() {
    let path = LevyPath::zero(uniform_grid(0.0, 3.0, 30)).unwrap();
    let traj = solve(&InitialData::Zero, &path, 0.1, &[0.0, 1.5, 3.0], 4, SolveOptions::default()).unwrap();
    assert!(traj.values.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn odd_ones_with_zero_forcing_is_constant() {
    let path = LevyPath::zero(uniform_grid(0.0, 5.0, 50)).unwrap();
    let times: Vec<f64> = (0..=10).map(|k| 0.5 * k as f64).collect();
    let traj = solve(&InitialData::OddOnes, &path, 0.0, &times, 8, SolveOptions::default()).unwrap();
    for row in &traj.values {
        for (a, b) in row.iter().zip(&traj.values[0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn drift_convolution_matches_kernel_quadrature() {
    let path = LevyPath::linear(uniform_grid(0.0, 20.0, 20_000), 1.0).unwrap();
    let v = stochastic_convolution(&path, 1, 0.0, 20.0).unwrap();
    let q = gauss_kronrod(|r| kernel_h(1, 0.0, r), 0.0, 20.0, Tolerance::default()).value;
    assert!((v - q).abs() < 1e-2, "{v} vs {q}");
}

/// Largest exact-vs-Euler gap at `t` for shells `1..=shells`.
fn gap(path: &LevyPath, nu: f64, t: f64, shells: u32, big_n: usize) -> f64 {
    let dt = path.uniform_step(1e-9).unwrap();
    let cfg = SchemeConfig::new(dt, big_n, nu).unwrap();
    let euler = euler_oracle::run(&InitialData::Zero, path, &cfg).unwrap();
    let exact = solve(&InitialData::Zero, path, nu, &[t], shells, SolveOptions::default()).unwrap();
    let last = euler.times.len() - 1;
    (1..=shells as usize)
        .map(|n| (euler.get(last, n) - exact.get(0, n)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn convolution_agrees_with_euler_at_first_order() {
    let fine = brownian(5e-4, 10.0, 99);
    let coarse = fine.coarsen(2).unwrap();
    let e_coarse = gap(&coarse, 0.5, 10.0, 3, 48);
    let e_fine = gap(&fine, 0.5, 10.0, 3, 48);
    let ratio = e_coarse / e_fine;
    assert!(e_coarse < 0.05, "{e_coarse}");
    assert!(ratio > 1.6 && ratio < 2.4, "{e_coarse} / {e_fine} = {ratio}");
}

#[test]
fn euler_energy_decays_without_forcing() {
    let cfg = SchemeConfig::new(0.01, 16, 0.3).unwrap();
    let mut state = ShellState::new(&InitialData::Vector { values: vec![1.0, 2.0, -1.0] }, &cfg, 0.0);
    let mut energy = state.energy();
    for _ in 0..2000 {
        state = euler_oracle::step(&state, 0.0, &cfg).unwrap();
        let e = state.energy();
        assert!(e <= energy * (1.0 + 1e-12));
        energy = e;
    }
    assert!(energy < 1e-3);
}

#[test]
fn euler_truncation_insensitivity() {
    let path = brownian(0.01, 8.0, 3);
    let small = euler_oracle::run(&InitialData::Zero, &path, &SchemeConfig::new(0.01, 32, 0.1).unwrap()).unwrap();
    let big = euler_oracle::run(&InitialData::Zero, &path, &SchemeConfig::new(0.01, 64, 0.1).unwrap()).unwrap();
    let d = small.max_abs_diff(&big, 8).unwrap();
    assert!(d < 1e-6, "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn euler_is_linear(a in -3.0f64..3.0, c in -3.0f64..3.0, seed in 0u64..1000) {
        let path = brownian(0.01, 1.0, seed);
        let cfg = SchemeConfig::new(0.01, 6, 0.2).unwrap();
        let init = InitialData::Vector { values: vec![1.0, 0.0, -2.0] };
        let scaled = InitialData::Vector { values: vec![a, 0.0, -2.0 * a] };
        let h = euler_oracle::run(&init, &LevyPath::zero(path.grid.clone()).unwrap(), &cfg).unwrap();
        let f = euler_oracle::run(&InitialData::Zero, &path, &cfg).unwrap();
        let both = euler_oracle::run(&scaled, &path.scaled(c), &cfg).unwrap();
        for i in 0..both.times.len() {
            for n in 1..=6 {
                let expect = a * h.get(i, n) + c * f.get(i, n);
                prop_assert!((both.get(i, n) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_data_at_time_zero(m in 1u32..30, n in 1u32..30, nu in 0.0f64..2.0) {
        let v = homogeneous_solution(&InitialData::UnitAt { m }, n, nu, 0.0, None).unwrap();
        prop_assert_eq!(v, if n == m { 1.0 } else { 0.0 });
    }
}
