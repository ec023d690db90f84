use std::f64::consts::PI;

use proptest::prelude::*;
use spde_coupling::lyapunov::dissipativity_constants_with_poincare;
use spde_coupling::spde_solvers::{
    cutoff_square, interpolation_ratio, paired_drift_pairing, sample_ou_exact, sine_coefficients,
    solve_deterministic_burgers, Eigenvalues, INTERPOLATION_CONSTANT,
};
use spde_coupling::stats::mean_var;
use spde_coupling::{DriftSpec, Field, Grid, NoiseStream, SolverConfig};

fn field_strategy(n: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, n)
}

fn to_field(grid: &Grid, v: Vec<f64>) -> Field {
    grid.field(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn cutoff_square_is_bounded(v in field_strategy(16, 50.0), r in 0.05f64..20.0) {
        let g = Grid::new(16).unwrap();
        let f = cutoff_square(&to_field(&g, v), r).unwrap();
        prop_assert!(f.l2_norm() <= r * r * (1.0 + 1e-12));
    }

    #[test]
    fn cutoff_square_is_lipschitz(
        x in field_strategy(16, 20.0),
        h in field_strategy(16, 1.0),
        step in 1e-6f64..10.0,
        r in 0.05f64..20.0,
    ) {
        let g = Grid::new(16).unwrap();
        let x = to_field(&g, x);
        let mut y = x.clone();
        y.axpy(step, &to_field(&g, h));
        let lhs = (&cutoff_square(&x, r).unwrap() - &cutoff_square(&y, r).unwrap()).l2_norm();
        let rhs = 2.0 * r * (&x - &y).l4_norm();
        prop_assert!(lhs <= rhs + 1e-12 * rhs.max(1.0), "{} > {}", lhs, rhs);
    }

    #[test]
    fn interpolation_inequality(v in field_strategy(24, 5.0)) {
        let g = Grid::new(24).unwrap();
        prop_assert!(interpolation_ratio(&to_field(&g, v)) <= INTERPOLATION_CONSTANT * (1.0 + 1e-12));
    }

    #[test]
    fn reaction_diffusion_dissipativity(
        x in field_strategy(12, 4.0),
        y in field_strategy(12, 4.0),
        alpha in 0.2f64..3.0,
        beta in -3.0f64..3.0,
        gamma in -2.0f64..15.0,
        delta in -1.0f64..1.0,
    ) {
        let g = Grid::new(12).unwrap();
        let spec = DriftSpec::reaction_diffusion(alpha, beta, gamma, delta).unwrap();
        let c = dissipativity_constants_with_poincare(alpha, beta, gamma, delta, g.first_eigenvalue()).unwrap();
        let (x, y) = (to_field(&g, x), to_field(&g, y));
        let d2 = (&x - &y).l2_norm_sq();
        let lhs = paired_drift_pairing(&spec, &x, &y);
        prop_assert!(lhs <= c.lambda * d2 - c.a * d2 * d2 + 1e-9 * (1.0 + lhs.abs()), "{} vs {}", lhs, c.lambda * d2 - c.a * d2 * d2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn deterministic_burgers_enters_half_ball(coeffs in prop::collection::vec(-1.0f64..1.0, 4), rho1 in 0.2f64..1.0) {
        let g = Grid::new(31).unwrap();
        let rho0 = 1.0;
        let mut x = g.zeros();
        for (k, c) in coeffs.iter().enumerate() {
            x.axpy(*c, &g.sine_mode(k + 1));
        }
        prop_assume!(x.l4_norm() > 1e-3);
        x.scale(rho0 / x.l4_norm());
        let t0 = 16.0 / (PI * PI) * (2.0 * rho0 / rho1).ln();
        let cfg = SolverConfig::new(1e-3, 1e6).unwrap();
        let end = solve_deterministic_burgers(&x, t0, &cfg).unwrap();
        prop_assert!(end.l4_norm() <= rho1 / 2.0 * 1.05, "{} > {}", end.l4_norm(), rho1 / 2.0);
    }
}

#[test]
fn dissipativity_over_many_random_pairs() {
    let g = Grid::new(8).unwrap();
    let (alpha, beta, gamma, delta) = (1.0, 0.5, 12.0, 0.1);
    let spec = DriftSpec::reaction_diffusion(alpha, beta, gamma, delta).unwrap();
    let c = dissipativity_constants_with_poincare(alpha, beta, gamma, delta, g.first_eigenvalue()).unwrap();
    let mut s = NoiseStream::new(21, 0);
    for _ in 0..100_000 {
        let sx = 3.0 * s.uniform();
        let sy = 3.0 * s.uniform();
        let x = g.field((0..8).map(|_| sx * s.standard_normal()).collect()).unwrap();
        let y = g.field((0..8).map(|_| sy * s.standard_normal()).collect()).unwrap();
        let d2 = (&x - &y).l2_norm_sq();
        let lhs = paired_drift_pairing(&spec, &x, &y);
        assert!(lhs <= c.lambda * d2 - c.a * d2 * d2 + 1e-9 * (1.0 + lhs.abs()));
    }
}

#[test]
fn ou_mode_one_mean_and_stationary_variance() {
    let g = Grid::new(8).unwrap();
    let x0 = g.sine_mode(1).scaled(0.7);
    let lambda1 = g.first_eigenvalue();
    let m = 100_000;
    let mut s = NoiseStream::new(22, 0);
    let t = 0.05;
    let c1: Vec<f64> = (0..m)
        .map(|_| sine_coefficients(&sample_ou_exact(&x0, t, 8, Eigenvalues::Discrete, &mut s).unwrap())[0])
        .collect();
    let (mean, var) = mean_var(&c1);
    let want = 0.7 * (-lambda1 * t).exp();
    assert!((mean - want).abs() <= 3.0 * (var / m as f64).sqrt(), "{mean} vs {want}");

    let late: Vec<f64> = (0..m)
        .map(|_| sine_coefficients(&sample_ou_exact(&x0, 50.0, 8, Eigenvalues::Discrete, &mut s).unwrap())[2])
        .collect();
    let (_, var) = mean_var(&late);
    let want = 1.0 / (2.0 * g.eigenvalue(3));
    assert!(
        (var - want).abs() <= 3.0 * want * (2.0 / (m as f64 - 1.0)).sqrt(),
        "{var} vs {want}"
    );
}
