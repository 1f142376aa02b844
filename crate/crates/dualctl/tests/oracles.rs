//! Oracle checks of the estimation, LMI and baseline layers.

mod common;

use common::*;
use dualctl::linalg::{Mat, Vector};
use dualctl::model::{PerformanceIndex, SystemModel};
use dualctl::sdp::AffMat;
use dualctl::seeds;
use dualctl::synthesis::{energy_bound_lmi, extract_controller, h_infinity_baseline, BaselineMode, GainScheduledController};
use rand::Rng;

#[test]
fn energy_lmi_matches_norm() {
    println!("{}", energy_lmi_oracle(200, 1).unwrap());
}

#[test]
fn energy_lmi_of_three_four_is_five() {
    let amps = [AffMat::constant(Mat::from_element(1, 1, 3.0)), AffMat::constant(Mat::from_element(1, 1, 4.0))];
    let at = |g: f64| dualctl::linalg::min_eig(&energy_bound_lmi(&AffMat::constant(Mat::from_element(1, 1, g)), &amps).eval(&[]));
    assert!(at(5.0).abs() < 1e-12);
    assert!(at(5.0 + 1e-6) > 0.0);
    assert!(at(5.0 - 1e-6) < 0.0);
}

#[test]
fn map_matches_dense_normal_equations() {
    println!("{}", map_oracle(50, 2).unwrap());
}

#[test]
fn projection_matches_grid_oracle() {
    println!("{}", projection_oracle(100, 3).unwrap());
}

#[test]
fn gain_scheduling_schur_round_trip() {
    println!("{}", gain_scheduling_round_trip(200, 4).unwrap());
}

#[test]
fn exploration_schur_round_trip() {
    println!("{}", exploration_round_trip(200, 5).unwrap());
}

#[test]
fn extracted_gain_is_the_scheduling_fixed_point() {
    let mut rng = seeds::rng(6);
    for _ in 0..100 {
        let n = 3;
        let ctrl = GainScheduledController {
            k_s: randn(&mut rng, 1, n) * 0.3,
            m: randn(&mut rng, 1, n),
            n: random_spd(&mut rng, n, 1.0),
            lambda_s: 1.0,
            lambda_u: 1.0,
            gamma_p: 1.0,
        };
        let a0 = randn(&mut rng, n, n) * 0.3;
        let b0 = randn(&mut rng, n, 1);
        let at = &a0 + randn(&mut rng, n, n) * 0.1;
        let bt = &b0 + randn(&mut rng, n, 1) * 0.1;
        let k = extract_controller(&ctrl, &a0, &b0, &at, &bt).unwrap();
        let kx = ctrl.k_x().unwrap();
        let x = Vector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
        // u = K_x x + K_s ((Ã − Â₀) x + (B̃ − B̂₀) u), iterated to its fixed point
        let gain = (&ctrl.k_s * (&bt - &b0))[(0, 0)];
        if gain.abs() >= 0.9 {
            continue;
        }
        let mut u = 0.0;
        for _ in 0..2000 {
            u = (&kx * &x)[0] + (&ctrl.k_s * ((&at - &a0) * &x + (&bt - &b0) * u))[0];
        }
        assert!((u - (&k * &x)[0]).abs() < 1e-9 * (1.0 + u.abs()));
    }
}

#[test]
fn nominal_baseline_matches_frequency_sweep() {
    for (a, b) in [(1.2, 1.0), (0.5, 2.0), (-0.9, 0.7)] {
        let am = Mat::from_element(1, 1, a);
        let bm = Mat::from_element(1, 1, b);
        let perf = PerformanceIndex::default_channel(1, 1.0);
        let g = h_infinity_baseline(&am, &bm, &perf, &BaselineMode::Nominal).unwrap().gamma;
        let oracle = scalar_hinf_optimum(a, b);
        assert!((g - oracle).abs() <= 1e-3 * oracle, "a = {a}: {g} vs {oracle}");
    }
}

#[test]
fn vanishing_uncertainty_recovers_nominal() {
    let s = SystemModel::chained(2, 0.49, 1.0);
    let perf = PerformanceIndex::default_channel(2, 1.0);
    let nominal = h_infinity_baseline(&s.a, &s.b, &perf, &BaselineMode::Nominal).unwrap().gamma;
    let tiny = h_infinity_baseline(&s.a, &s.b, &perf, &BaselineMode::Robust(Mat::identity(3, 3) * 1e8)).unwrap().gamma;
    assert!((tiny - nominal).abs() <= 0.02 * nominal, "{tiny} vs {nominal}");
    let robust = h_infinity_baseline(&s.a, &s.b, &perf, &BaselineMode::Robust(Mat::identity(3, 3) * 50.0)).unwrap().gamma;
    assert!(robust >= nominal * (1.0 - 1e-6), "{robust} < {nominal}");
}

#[test]
fn baseline_gain_is_achieved_in_closed_loop() {
    let s = SystemModel::chained(3, 0.49, 1.0);
    let perf = PerformanceIndex::default_channel(3, 1.0);
    let base = h_infinity_baseline(&s.a, &s.b, &perf, &BaselineMode::Nominal).unwrap();
    let k = base.controller.k_x().unwrap();
    let g = dualctl::hinf::closed_loop_hinf(&s.a, &s.b, &k, &perf.c, &perf.d_u, &perf.d_w).unwrap();
    assert!(g <= base.gamma * (1.0 + 1e-6), "{g} > {}", base.gamma);
}
