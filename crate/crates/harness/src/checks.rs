//! Ensemble checks of the coupling inequality and of the generator identity
//! for functions of the distance.

use serde::Serialize;
use spde_coupling::lyapunov::{second_derivative, LyapunovTable, Which};
use spde_coupling::reflection_coupling::{CoupledPair, CouplingEngine, MeetingRule, NoiseMixing, PairStreams};
use spde_coupling::spde_solvers::paired_drift_pairing;
use spde_coupling::stats::{clopper_pearson, mean_var, two_sided_z};
use spde_coupling::{DriftSpec, Field, Result as CoreResult, SolverConfig};

use crate::ensemble::run_ensemble;
use crate::error::Result;

/// Bounded cylinder function with a known sup-norm.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub sup_norm: f64,
    pub eval: fn(&Field) -> f64,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish()
    }
}

fn mode1_tanh(x: &Field) -> f64 {
    0.5 * (1.0 + x.dot(&x.grid().sine_mode(1)).tanh())
}

fn l2_gauss(x: &Field) -> f64 {
    (-x.l2_norm_sq()).exp()
}

/// `(1 + tanh <x, e_1>)/2` and `exp(-|x|_2^2)`, both with values in `[0, 1]`.
pub fn builtin_test_functions() -> [TestFunction; 2] {
    [
        TestFunction {
            name: "mode1_tanh",
            sup_norm: 1.0,
            eval: mode1_tanh,
        },
        TestFunction {
            name: "l2_gauss",
            sup_norm: 1.0,
            eval: l2_gauss,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvRow {
    pub t: f64,
    pub function: String,
    /// `|mean phi(X1) - mean phi(X2)|`.
    pub mean_diff: f64,
    /// `||phi||_0 P_hat(tau >= t)`.
    pub bound: f64,
    /// Paired-difference CI half-width plus the binomial half-width scaled by
    /// the sup-norm.
    pub slack: f64,
    pub violated: bool,
}

/// One row of the coupling-inequality table. `survivors` of the `phi1.len()`
/// pairs have `tau >= t`.
pub fn tv_check(
    t: f64,
    test: &TestFunction,
    phi1: &[f64],
    phi2: &[f64],
    survivors: usize,
    level: f64,
) -> CoreResult<TvRow> {
    let n = phi1.len();
    assert_eq!(n, phi2.len(), "paired samples");
    let diffs: Vec<f64> = phi1.iter().zip(phi2).map(|(a, b)| a - b).collect();
    let (mean, var) = mean_var(&diffs);
    let p_hat = survivors as f64 / n as f64;
    let (_, p_hi) = clopper_pearson(survivors, n, level)?;
    let slack = two_sided_z(level) * (var / n as f64).sqrt() + test.sup_norm * (p_hi - p_hat);
    let bound = test.sup_norm * p_hat;
    Ok(TvRow {
        t,
        function: test.name.into(),
        mean_diff: mean.abs(),
        bound,
        slack,
        violated: mean.abs() > bound + slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorRow {
    pub case: String,
    /// Monte Carlo estimate of `(E f(|D(dt)|) - f(|d0|)) / dt`.
    pub one_step_drift: f64,
    /// `2 f''(r) + (f'(r)/r) <A d + b(x1) - b(x2), d>`.
    pub prediction: f64,
    pub residual: f64,
    pub std_err: f64,
}

impl GeneratorRow {
    pub fn z_score(&self) -> f64 {
        if self.std_err > 0.0 {
            self.residual / self.std_err
        } else if self.residual == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// A radial function with its first two derivatives.
pub trait Radial: Sync {
    fn f(&self, r: f64) -> CoreResult<f64>;
    fn fp(&self, r: f64) -> CoreResult<f64>;
    fn fpp(&self, r: f64) -> CoreResult<f64>;
}

pub struct Square;

impl Radial for Square {
    fn f(&self, r: f64) -> CoreResult<f64> {
        Ok(r * r)
    }
    fn fp(&self, r: f64) -> CoreResult<f64> {
        Ok(2.0 * r)
    }
    fn fpp(&self, _: f64) -> CoreResult<f64> {
        Ok(2.0)
    }
}

impl Radial for LyapunovTable {
    fn f(&self, r: f64) -> CoreResult<f64> {
        self.eval(r, Which::F)
    }
    fn fp(&self, r: f64) -> CoreResult<f64> {
        self.eval(r, Which::FPrime)
    }
    fn fpp(&self, r: f64) -> CoreResult<f64> {
        second_derivative(self, r)
    }
}

/// One reflection-coupled step from `(x1, x2)` per sample, `m` samples.
///
/// The noise component along `e = (x1 - x2)/|x1 - x2|` enters `|D|` at first
/// order with mean zero; subtracting `f'(r) <n1 - n2, e> / dt` removes that
/// variance without changing the mean. Meetings are not tested within the
/// step, so the estimate is of the plain generator.
#[allow(clippy::too_many_arguments)]
pub fn generator_check(
    case: &str,
    f: &dyn Radial,
    x1: &Field,
    x2: &Field,
    spec: &DriftSpec,
    cfg: &SolverConfig,
    m: usize,
    master_seed: u64,
    threads: usize,
) -> Result<GeneratorRow> {
    let d0 = x1 - x2;
    let r0 = d0.l2_norm();
    let dt = cfg.dt;
    if r0 == 0.0 {
        let samples = run_ensemble(m, threads, |i| {
            let mut engine = CouplingEngine::new(*x1.grid(), *cfg)?;
            let mut streams = PairStreams::for_trajectory(master_seed, i);
            let mut pair = CoupledPair::merged(x1.clone(), 0.0);
            engine.step(
                &mut pair,
                spec,
                NoiseMixing::Reflection,
                &MeetingRule::default(),
                &mut streams,
            )?;
            Ok((f.f(pair.distance())? - f.f(0.0)?) / dt)
        })?;
        let (mean, var) = mean_var(&samples);
        return Ok(GeneratorRow {
            case: case.into(),
            one_step_drift: mean,
            prediction: 0.0,
            residual: mean,
            std_err: (var / m as f64).sqrt(),
        });
    }
    let e = d0.scaled(1.0 / r0);
    let fr0 = f.f(r0)?;
    let fp0 = f.fp(r0)?;
    let prediction = 2.0 * f.fpp(r0)? + fp0 / r0 * paired_drift_pairing(spec, x1, x2);
    let rule = MeetingRule {
        eps_meet: f64::MIN_POSITIVE,
        bridge: false,
    };
    let samples = run_ensemble(m, threads, |i| {
        let grid = *x1.grid();
        let mut engine = CouplingEngine::new(grid, *cfg)?;
        let mut streams = PairStreams::for_trajectory(master_seed, i);
        let mut dw1 = grid.zeros();
        let mut dw2 = grid.zeros();
        streams.w1.fill_white_increment(dt, &mut dw1);
        streams.w2.fill_white_increment(dt, &mut dw2);
        let xi = std::f64::consts::SQRT_2 * (dw1.dot(&e) - dw2.dot(&e));
        let mut pair = CoupledPair::new(x1.clone(), x2.clone(), rule.eps_meet)?;
        engine.step_with_increments(&mut pair, spec, NoiseMixing::Reflection, &rule, &dw1, &dw2, 1.0)?;
        Ok((f.f(pair.distance())? - fr0 - fp0 * xi) / dt)
    })?;
    let (mean, var) = mean_var(&samples);
    Ok(GeneratorRow {
        case: case.into(),
        one_step_drift: mean,
        prediction,
        residual: mean - prediction,
        std_err: (var / m as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use spde_coupling::make_grid;

    #[test]
    fn constant_function_has_zero_difference() {
        let c = TestFunction {
            name: "const",
            sup_norm: 2.0,
            eval: |_| 2.0,
        };
        let g = make_grid(4).unwrap();
        let v1: Vec<f64> = (0..50).map(|_| (c.eval)(&g.zeros())).collect();
        let row = tv_check(0.1, &c, &v1, &v1.clone(), 10, 0.95).unwrap();
        assert_eq!(row.mean_diff, 0.0);
        assert!(!row.violated);
    }

    #[test]
    fn beyond_all_meetings_both_sides_vanish() {
        let [phi, _] = builtin_test_functions();
        let v = vec![0.3; 40];
        let row = tv_check(5.0, &phi, &v, &v, 0, 0.95).unwrap();
        assert_eq!(row.mean_diff, 0.0);
        assert_eq!(row.bound, 0.0);
        assert!(!row.violated);
    }

    #[test]
    fn gross_violation_is_flagged() {
        let [phi, _] = builtin_test_functions();
        let row = tv_check(1.0, &phi, &vec![1.0; 200], &vec![0.0; 200], 20, 0.95).unwrap();
        assert!(row.violated);
    }

    #[test]
    fn builtins_are_bounded_by_sup_norm() {
        let g = make_grid(8).unwrap();
        for k in [0.0, 0.5, -3.0, 40.0] {
            let x = g.sine_mode(1).scaled(k);
            for t in builtin_test_functions() {
                let v = (t.eval)(&x);
                assert!((0.0..=t.sup_norm).contains(&v));
            }
        }
    }

    #[test]
    fn merged_pair_has_zero_generator() {
        let g = make_grid(4).unwrap();
        let x = g.sine_mode(1).scaled(0.3);
        let cfg = SolverConfig::new(1e-5, 1e3).unwrap();
        let row = generator_check("merged", &Square, &x, &x, &DriftSpec::Zero, &cfg, 100, 1, 1).unwrap();
        assert_eq!(row.one_step_drift, 0.0);
        assert_eq!(row.prediction, 0.0);
        assert_eq!(row.z_score(), 0.0);
    }
}
