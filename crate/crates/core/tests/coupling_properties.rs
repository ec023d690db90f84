use std::f64::consts::FRAC_1_SQRT_2;

use proptest::prelude::*;
use spde_coupling::burgers_staged::{StagedParams, StagedRunner, WaitCoupling};
use spde_coupling::lyapunov::{build_f_r_with_knots, build_f_with_knots, cutoff_drift_constant, RdConstants, Which};
use spde_coupling::reflection_coupling::{run_observed, run_until_coupled, CoupledPair, MeetingRule, PairStreams};
use spde_coupling::spde_solvers::{sample_ou_exact, sine_coefficients, Eigenvalues, Stepper};
use spde_coupling::stats::ks_two_sample;
use spde_coupling::{DriftSpec, Grid, NoiseStream, SolverConfig};

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn meeting_time_is_stable_under_threshold_refinement() {
    let g = Grid::new(16).unwrap();
    let cfg = SolverConfig::new(1e-4, 1e6).unwrap();
    let spec = DriftSpec::reaction_diffusion(1.0, 0.0, 0.0, 0.0).unwrap();
    let x1 = g.sine_mode(1).scaled(0.5);
    let x2 = g.sine_mode(1).scaled(-0.5);
    let m = 400usize;
    let mut medians = Vec::new();
    let mut width = f64::INFINITY;
    for eps in [1e-4, 1e-5, 1e-6] {
        let rule = MeetingRule::new(eps, true).unwrap();
        let mut taus: Vec<f64> = (0..m)
            .map(|i| {
                run_until_coupled(&x1, &x2, &spec, &cfg, 2.0, &rule, 31, i as u64)
                    .unwrap()
                    .time()
            })
            .collect();
        let med = median(&mut taus);
        // distribution-free 95% interval for the median from order statistics
        let half = (1.96 * (m as f64).sqrt() / 2.0).ceil() as usize;
        width = width.min(taus[m / 2 + half] - taus[m / 2 - half]);
        medians.push(med);
    }
    let spread = medians.iter().cloned().fold(f64::MIN, f64::max) - medians.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < width, "medians {medians:?}, CI width {width}");
}

#[test]
fn coupled_marginal_matches_exact_ou() {
    let g = Grid::new(16).unwrap();
    let cfg = SolverConfig::new(1e-4, 1e6).unwrap();
    let x1 = g.zeros();
    let x2 = g.sine_mode(1).scaled(0.5);
    let m = 2000;
    let t = 0.5;
    let rule = MeetingRule::default();
    let mut coupled_c1 = Vec::with_capacity(m);
    let mut coupled_l2 = Vec::with_capacity(m);
    for i in 0..m as u64 {
        run_observed(&x1, &x2, &DriftSpec::Zero, &cfg, &[t], &rule, 41, i, |_, p| {
            coupled_c1.push(sine_coefficients(p.x1())[0]);
            coupled_l2.push(p.x1().l2_norm_sq());
        })
        .unwrap();
    }
    let mut s = NoiseStream::new(42, 0);
    let (exact_c1, exact_l2): (Vec<f64>, Vec<f64>) = (0..m)
        .map(|_| {
            let u = sample_ou_exact(&x1, t, 16, Eigenvalues::Discrete, &mut s).unwrap();
            (sine_coefficients(&u)[0], u.l2_norm_sq())
        })
        .unzip();
    let ks1 = ks_two_sample(&coupled_c1, &exact_c1).unwrap();
    assert!(ks1.p_value >= 0.01, "mode 1: {ks1:?}");
    // implicit Euler damps the stiffest modes; compare |X|_2^2 against the
    // same time-stepped law rather than the continuous-time one
    let stepper = Stepper::new(g, cfg).unwrap();
    let mut w = g.zeros();
    let plain_l2: Vec<f64> = (0..m)
        .map(|_| {
            let mut u = x1.clone();
            for _ in 0..cfg.steps_for(t) {
                s.fill_white_increment(cfg.dt, &mut w);
                u = stepper.step(&u, &DriftSpec::Zero, &w).unwrap();
            }
            u.l2_norm_sq()
        })
        .collect();
    let ks2 = ks_two_sample(&coupled_l2, &plain_l2).unwrap();
    assert!(ks2.p_value >= 0.01, "|X|_2^2: {ks2:?}");
    let ks3 = ks_two_sample(&coupled_l2, &exact_l2).unwrap();
    assert!(ks3.statistic < 0.2, "|X|_2^2 vs exact: {ks3:?}");
}

#[test]
fn merged_staged_block_is_the_plain_burgers_stepper() {
    let g = Grid::new(16).unwrap();
    let mut params = StagedParams::new(1.0, 0.3, 3.0, 1.0).unwrap();
    params.dt = 1e-3;
    params.wait_coupling = WaitCoupling::Synchronous;
    let mut runner = StagedRunner::new(g, params).unwrap();
    let x = g.sine_mode(2).scaled(0.4);
    let mut pair = CoupledPair::merged(x.clone(), 0.0);
    let mut streams = PairStreams::for_trajectory(51, 3);
    let mut replay = streams.clone();
    let out = runner.block(&mut pair, &mut streams).unwrap();
    assert!(out.coupled_at_end);

    let cfg = params.solver_config().unwrap();
    let stepper = Stepper::new(g, cfg).unwrap();
    let (mut w1, mut w2, mut mixed) = (g.zeros(), g.zeros(), g.zeros());
    let mut u = x;
    for _ in 0..cfg.steps_for(params.t) {
        replay.w1.fill_white_increment(cfg.dt, &mut w1);
        replay.w2.fill_white_increment(cfg.dt, &mut w2);
        for ((o, a), b) in mixed.values_mut().iter_mut().zip(w1.values()).zip(w2.values()) {
            *o = FRAC_1_SQRT_2 * (a + b);
        }
        u = stepper.step(&u, &DriftSpec::Burgers, &mixed).unwrap();
    }
    assert_eq!(out.end_state.x1().values(), u.values());
    assert_eq!(out.end_state.x2().values(), u.values());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rd_lyapunov_table_shape(lambda in 0.0f64..10.0, a in 0.05f64..2.0) {
        let t = build_f_with_knots(RdConstants::new(lambda, a).unwrap(), 6.0, 1e-10, 300).unwrap();
        let bound = t.lambda_bound().unwrap();
        let mut prev = (-1.0, f64::INFINITY);
        for r in t.knots() {
            let f = t.eval(r, Which::F).unwrap();
            let fp = t.eval(r, Which::FPrime).unwrap();
            prop_assert!(f > prev.0 || r == 0.0);
            prop_assert!(fp > 0.0 && fp < prev.1);
            prop_assert!(f <= bound && fp <= bound);
            prev = (f, fp);
        }
        prop_assert_eq!(t.eval(0.0, Which::F).unwrap(), 0.0);
    }

    #[test]
    fn cutoff_constant_nondecreasing_in_radius(r in 0.1f64..40.0, factor in 1.0f64..3.0, g in 0.5715f64..0.99) {
        let small = cutoff_drift_constant(r, g, 1.0).unwrap();
        let large = cutoff_drift_constant(r * factor, g, 1.0).unwrap();
        prop_assert!(large >= small * (1.0 - 1e-12));
    }

    #[test]
    fn cutoff_lyapunov_grows_with_radius(r in 0.5f64..6.0, factor in 1.0f64..2.0, rho1 in 0.05f64..1.0) {
        let t_small = build_f_r_with_knots(r, 4.0 / 7.0, 1.0, 2.5, 1e-10, 200).unwrap();
        let t_large = build_f_r_with_knots(r * factor, 4.0 / 7.0, 1.0, 2.5, 1e-10, 200).unwrap();
        let s = t_small.eval_ln(2.0 * rho1, Which::F).unwrap();
        let l = t_large.eval_ln(2.0 * rho1, Which::F).unwrap();
        prop_assert!(l >= s - 1e-9 * s.abs().max(1.0), "{} < {}", l, s);
        let lower = t_small.eval_ln(rho1, Which::F).unwrap();
        prop_assert!(s >= lower - 4.0 * f64::EPSILON * s.abs().max(1.0));
    }
}
