//! Experiment kinds and their artifacts.

use std::time::Instant;

use serde_json::json;
use spde_coupling::burgers_staged::{
    calibrate, kantorovich_ci, CalibrationReport, CalibrationSettings, StagedParams, StagedRunner, StagedTrace,
};
use spde_coupling::lyapunov::{
    build_f_r_with_knots, build_f_with_knots, cutoff_drift_constant, dissipativity_constants, generator_bound,
    ode_residual, rd_ln_fprime, LyapunovKind, LyapunovTable, Which, RESIDUAL_STEP,
};
use spde_coupling::quadrature::gauss_legendre5_composite;
use spde_coupling::reflection_coupling::{run_observed, CouplingOutcome, MeetingRule};
use spde_coupling::spde_solvers::{sine_coefficients, Eigenvalues, OuSpectralSampler};
use spde_coupling::stats::{clopper_pearson, ks_one_sample, ks_two_sample, mean_ci, two_sided_z};
use spde_coupling::{DriftSpec, Error as CoreError, Field, Grid, NoiseStream, SolverConfig, Stepper};

use crate::checks::{builtin_test_functions, generator_check, tv_check, Square};
use crate::config::{DriftChoice, ExperimentConfig, ExperimentKind, TestFunction};
use crate::ensemble::run_ensemble;
use crate::error::{config_err, Result};
use crate::estimators::{estimate_tau_stats, fit_decay, survival_curve};
use crate::oracle;
use crate::report::{flag, num, ReportBundle, Table};

/// Confidence level of every interval in the reports.
pub const LEVEL: f64 = 0.95;
/// Level of the two-sample tests.
pub const TEST_LEVEL: f64 = 0.01;

// Master-seed offsets keeping auxiliary ensembles off the coupled streams.
const PLAIN_SALT: u64 = 0x5851_f42d_4c95_7f2d;
const ORACLE_SALT: u64 = 0x1405_7b7e_f767_814f;
const CALIBRATION_SALT: u64 = 0x2545_f491_4f6c_dd1d;

pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rep = match cfg.experiment {
        ExperimentKind::Lyapunov => lyapunov(cfg, threads),
        ExperimentKind::RdCouple => rd_couple(cfg, threads),
        ExperimentKind::BurgersStaged => burgers_staged(cfg, threads),
        ExperimentKind::Calibrate => calibrate_only(cfg, threads),
        ExperimentKind::OuValidate => ou_validate(cfg, threads),
        ExperimentKind::GeneratorCheck => generator(cfg, threads),
    }?;
    rep.time("total", start);
    Ok(rep)
}

fn grid_and_solver(cfg: &ExperimentConfig) -> Result<(Grid, SolverConfig)> {
    Ok((Grid::new(cfg.n)?, SolverConfig::new(cfg.dt, cfg.blowup_guard)?))
}

fn drift(cfg: &ExperimentConfig) -> Result<DriftSpec> {
    Ok(match cfg.drift {
        DriftChoice::Rd => DriftSpec::reaction_diffusion(cfg.alpha, cfg.beta, cfg.gamma, cfg.delta)?,
        DriftChoice::Zero => DriftSpec::Zero,
    })
}

fn rd_table(cfg: &ExperimentConfig, r_max: f64) -> Result<LyapunovTable> {
    let consts = dissipativity_constants(cfg.alpha, cfg.beta, cfg.gamma, cfg.delta)?;
    Ok(build_f_with_knots(consts, r_max, cfg.quad_tol, cfg.knots)?)
}

/// `t_grid, 2 t_grid, ...` up to `t_max`, plus `t_max` and the `extra`
/// times not beyond it.
pub fn output_times(t_grid: f64, t_max: f64, extra: &[f64]) -> Vec<f64> {
    let count = (t_max / t_grid + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (1..=count).map(|k| k as f64 * t_grid).collect();
    v.push(t_max);
    v.extend(extra.iter().copied().filter(|t| *t > 0.0 && *t <= t_max));
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    v
}

fn ks_row(table: &mut Table, rep: &mut ReportBundle, name: &str, a: &[f64], b: &[f64]) -> Result<()> {
    let ks = ks_two_sample(a, b)?;
    table.push(vec![name.into(), num(ks.statistic), num(ks.p_value)]);
    rep.check(
        &format!("marginal_{name}"),
        ks.p_value > TEST_LEVEL,
        format!(
            "two-sample KS D = {:.4}, p = {:.4} (n = {}, {})",
            ks.statistic,
            ks.p_value,
            a.len(),
            b.len()
        ),
    );
    Ok(())
}

fn lyapunov(cfg: &ExperimentConfig, _threads: usize) -> Result<ReportBundle> {
    let mut rep = ReportBundle::new(cfg, 1);
    let start = Instant::now();
    let consts = dissipativity_constants(cfg.alpha, cfg.beta, cfg.gamma, cfg.delta)?;
    let table = build_f_with_knots(consts, cfg.r_max, cfg.quad_tol, cfg.knots)?;
    rep.time("build_f", start);
    let rows = table.rows().expect("RD tables are linear");
    let mut csv = Table::new("lyapunov.csv", &["r", "f", "fprime"]);
    for (r, f, fp) in &rows {
        csv.push(vec![num(*r), num(*f), num(*fp)]);
    }
    rep.tables.push(csv);

    let start = Instant::now();
    let hi = 10.0f64.min(cfg.r_max - 2.0 * RESIDUAL_STEP);
    let mut max_res = 0.0f64;
    for (r, _, _) in rows.iter().filter(|(r, _, _)| *r >= 0.01 && *r <= hi) {
        max_res = max_res.max(ode_residual(&table, *r)?.abs());
    }
    rep.check(
        "ode_residual",
        max_res <= 1e-5,
        format!("max |residual| = {max_res:.3e} on [0.01, {hi}]"),
    );
    let product = rows
        .iter()
        .map(|(r, _, fp)| (consts.a * r.powi(3) - consts.lambda * r) * fp)
        .fold(f64::NEG_INFINITY, f64::max);
    rep.check(
        "drift_product_below_one",
        product < 1.0,
        format!("max (a r^3 - lambda r) f'(r) = {product:.6}"),
    );
    let decreasing = rows.windows(2).all(|w| w[1].2 < w[0].2);
    let positive = rows.iter().all(|(_, _, fp)| *fp > 0.0);
    rep.check(
        "fprime_decreasing_positive",
        decreasing && positive,
        format!("strictly decreasing: {decreasing}, positive: {positive}"),
    );
    let lambda = table.lambda_bound().unwrap_or(f64::NAN);
    rep.check(
        "lambda_finite",
        lambda.is_finite() && lambda > 0.0,
        format!("Lambda = {lambda}"),
    );
    let mut max_gen = f64::NEG_INFINITY;
    for (r, _, _) in rows.iter().filter(|(r, _, _)| *r <= hi) {
        max_gen = max_gen.max(generator_bound(&table, *r)?);
    }
    rep.check(
        "generator_bound",
        max_gen <= -1.0 + 1e-6,
        format!("max 2f'' + f'(lambda r - a r^3) = {max_gen:.9} on [0, {hi}]"),
    );
    let mut max_mid = 0.0f64;
    let h = table.spacing();
    for j in [0usize, 7, 99, 499, 1234] {
        let mid = (j as f64 + 0.5) * h;
        if mid >= hi {
            continue;
        }
        let direct = gauss_legendre5_composite(|s| Ok(rd_ln_fprime(&consts, s, cfg.quad_tol)?.exp()), 0.0, mid, 64)?;
        max_mid = max_mid.max((table.eval(mid, Which::F)? - direct).abs());
    }
    rep.check(
        "midpoint_interpolation",
        max_mid <= 1e-8,
        format!("max |f_table - f_direct| = {max_mid:.3e}"),
    );
    rep.time("rd_checks", start);
    rep.result("a", consts.a);
    rep.result("lambda", consts.lambda);
    rep.result("Lambda", lambda);
    rep.result("f_infinity", table.f_infinity());
    rep.result("max_ode_residual", max_res);

    if let Some(radius) = cfg.r {
        let start = Instant::now();
        let cut = build_f_r_with_knots(radius, cfg.gamma_interp, cfg.c_sob, cfg.r_max, cfg.quad_tol, cfg.knots)?;
        let mut csv = Table::new("lyapunov_cutoff.csv", &["r", "ln_f", "ln_fprime"]);
        let log_rows = cut.log_rows();
        for (r, lf, lfp) in &log_rows {
            csv.push(vec![num(*r), num(*lf), num(*lfp)]);
        }
        rep.tables.push(csv);
        // f_R' can drop below the resolution of f_R, where the table is flat up to rounding
        let monotone = log_rows
            .windows(2)
            .all(|w| w[1].1 >= w[0].1 - 4.0 * f64::EPSILON * w[0].1.abs())
            && log_rows[0].1 == f64::NEG_INFINITY;
        rep.check(
            "cutoff_f_increasing",
            monotone,
            format!("f_R(0) = 0 and ln f_R nondecreasing to 4 ulp on [0, {}]", cfg.r_max),
        );
        let radii: Vec<f64> = (1..=100).map(|i| 0.5 * i as f64).collect();
        let c: Vec<f64> = radii
            .iter()
            .map(|r| cutoff_drift_constant(*r, cfg.gamma_interp, cfg.c_sob))
            .collect::<std::result::Result<_, _>>()?;
        let c_monotone = c.windows(2).all(|w| w[1] >= w[0]);
        rep.check(
            "cutoff_constant_monotone",
            c_monotone,
            "c_R nondecreasing in R on 0.5..=50".to_string(),
        );
        let mut finite = true;
        for r in [1.0, 5.0, 10.0, 25.0, 50.0] {
            let t = build_f_r_with_knots(r, cfg.gamma_interp, cfg.c_sob, cfg.r_max, cfg.quad_tol, 200)?;
            finite &= t
                .log_rows()
                .iter()
                .skip(1)
                .all(|(_, a, b)| a.is_finite() && b.is_finite());
        }
        rep.check(
            "cutoff_finite",
            finite,
            "ln f_R, ln f_R' finite for R in {1, 5, 10, 25, 50}",
        );
        if let LyapunovKind::BurgersCutoff { c_r, c_ode, a, .. } = *cut.kind() {
            rep.result("cutoff", json!({"R": radius, "a": a, "c_R": c_r, "c_ode": c_ode}));
        }
        rep.time("cutoff", start);
    }
    Ok(rep)
}

/// Per-time observations of one coupled trajectory.
struct Obs {
    phi: [(f64, f64); 2],
    c1: f64,
    l2_sq: f64,
}

fn rd_couple(cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle> {
    let mut rep = ReportBundle::new(cfg, threads);
    let (grid, solver) = grid_and_solver(cfg)?;
    let spec = drift(cfg)?;
    let rule = MeetingRule::new(cfg.eps_meet, cfg.bridge)?;
    let e1 = grid.sine_mode(1);
    let center = cfg.center.field(&grid)?;
    let mut x1 = center.clone();
    x1.axpy(0.5 * cfg.separation, &e1);
    let mut x2 = center.clone();
    x2.axpy(-0.5 * cfg.separation, &e1);
    let d0 = (&x1 - &x2).l2_norm();
    let times = output_times(cfg.t_grid, cfg.t_max, &[cfg.t_marginal]);
    let tests = builtin_test_functions();

    let start = Instant::now();
    let runs = run_ensemble(cfg.m, threads, |i| {
        let mut obs = Vec::with_capacity(times.len());
        let out = run_observed(&x1, &x2, &spec, &solver, &times, &rule, cfg.seed, i, |_, pair| {
            obs.push(Obs {
                phi: [
                    ((tests[0].eval)(pair.x1()), (tests[0].eval)(pair.x2())),
                    ((tests[1].eval)(pair.x1()), (tests[1].eval)(pair.x2())),
                ],
                c1: pair.x1().dot(&e1),
                l2_sq: pair.x1().l2_norm_sq(),
            })
        })?;
        Ok((out, obs))
    })?;
    rep.time("coupled_ensemble", start);
    let outcomes: Vec<CouplingOutcome> = runs.iter().map(|(o, _)| *o).collect();

    let mut tau = Table::new("tau_samples.csv", &["traj_id", "tau", "censored", "blowup"]);
    for o in &outcomes {
        tau.push(vec![
            o.trajectory_id.to_string(),
            num(o.time()),
            flag(o.is_censored()),
            flag(o.blowup),
        ]);
    }
    rep.tables.push(tau);
    let survival = survival_curve(&outcomes, &times, LEVEL)?;
    let mut surv = Table::new("survival.csv", &["t", "p_hat", "ci_lo", "ci_hi"]);
    for p in &survival {
        surv.push(vec![num(p.t), num(p.p_hat), num(p.ci_lo), num(p.ci_hi)]);
    }
    rep.tables.push(surv);
    let censored = outcomes.iter().filter(|o| o.is_censored()).count();
    let blowups = outcomes.iter().filter(|o| o.blowup).count();
    rep.result("d0", d0);
    rep.result("samples", outcomes.len());
    rep.result("censored", censored);
    rep.result("blowups", blowups);

    if cfg.drift == DriftChoice::Rd {
        let start = Instant::now();
        let table = rd_table(cfg, cfg.r_max.max(1.5 * d0))?;
        rep.time("build_f", start);
        match estimate_tau_stats(&outcomes, &table, d0, &times, LEVEL) {
            Ok(st) => {
                let lam2 = 2.0 * st.lambda * st.lambda;
                rep.check(
                    "mean_tau_bound",
                    st.mean.hi <= 1.1 * st.f_d0,
                    format!(
                        "mean tau = {:.5} [{:.5}, {:.5}] over {} uncensored ({} censored); f(d0) = {:.5}, 1.1 f(d0) = {:.5}",
                        st.mean.mean, st.mean.lo, st.mean.hi, st.uncensored, st.censored, st.f_d0, 1.1 * st.f_d0
                    ),
                );
                let mut tail = Table::new("tail_bound.csv", &["t", "p_hat", "ci_lo", "bound", "envelope"]);
                let mut violations = 0;
                for p in &st.survival {
                    let bound = ((st.f_d0 - p.t) / lam2).exp();
                    let envelope = (1.0 / st.lambda).exp() * (-p.t / lam2).exp();
                    violations += usize::from(p.ci_lo > bound);
                    tail.push(vec![num(p.t), num(p.p_hat), num(p.ci_lo), num(bound), num(envelope)]);
                }
                rep.tables.push(tail);
                rep.check(
                    "survival_tail_bound",
                    violations == 0,
                    format!("{violations} grid times with P_hat(tau >= t) above exp((f(d0) - t)/(2 Lambda^2)) beyond CI slack"),
                );
                let exp_bound = (st.f_d0 / lam2).exp();
                rep.check(
                    "exp_moment_bound",
                    st.exp_moment_lower <= exp_bound || st.exp_moment <= exp_bound,
                    format!(
                        "E exp(tau/(2 Lambda^2)) = {:.6} (uncensored), {:.6} (censored at horizon); bound exp(f(d0)/(2 Lambda^2)) = {exp_bound:.6}",
                        st.exp_moment, st.exp_moment_lower
                    ),
                );
                rep.result("tau_stats", &st);
            }
            Err(CoreError::InsufficientData(msg)) => rep.result("tau_stats_unavailable", msg),
            Err(e) => return Err(e.into()),
        }
    }

    let mut tv = Table::new("tv.csv", &["t", "function", "mean_diff", "bound", "slack", "violated"]);
    let mut violations = 0;
    for (j, &t) in times.iter().enumerate() {
        let present: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].1.len() > j).collect();
        if present.len() < 2 {
            continue;
        }
        let survivors = present
            .iter()
            .filter(|&&i| runs[i].0.met_time().is_none_or(|tau| tau >= t))
            .count();
        for (q, test) in tests.iter().enumerate() {
            let a: Vec<f64> = present.iter().map(|&i| runs[i].1[j].phi[q].0).collect();
            let b: Vec<f64> = present.iter().map(|&i| runs[i].1[j].phi[q].1).collect();
            let row = tv_check(t, test, &a, &b, survivors, LEVEL)?;
            violations += usize::from(row.violated);
            tv.push(vec![
                num(t),
                row.function,
                num(row.mean_diff),
                num(row.bound),
                num(row.slack),
                flag(row.violated),
            ]);
        }
    }
    if !tv.rows.is_empty() {
        rep.check(
            "tv_inequality",
            violations == 0,
            format!("{violations} violations in {} rows", tv.rows.len()),
        );
    }
    rep.tables.push(tv);

    if cfg.t_marginal > 0.0 && cfg.t_marginal <= cfg.t_max && cfg.m >= 2 {
        let start = Instant::now();
        let j = times
            .iter()
            .position(|t| (t - cfg.t_marginal).abs() <= 1e-12 * cfg.t_marginal.max(1.0))
            .expect("marginal time is on the output grid");
        let coupled: Vec<(f64, f64)> = runs
            .iter()
            .filter_map(|(_, o)| o.get(j))
            .map(|o| (o.c1, o.l2_sq))
            .collect();
        let stepper = Stepper::new(grid, solver)?;
        let steps = solver.steps_for(cfg.t_marginal);
        let plain = run_ensemble(cfg.m, threads, |i| {
            let mut u = x1.clone();
            let mut s = NoiseStream::new(cfg.seed ^ PLAIN_SALT, i);
            match stepper.evolve(&mut u, &spec, steps, &mut s) {
                Ok(()) => Ok(Some((u.dot(&e1), u.l2_norm_sq()))),
                Err(CoreError::BlowUp { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })?;
        let plain_blowups = plain.iter().filter(|p| p.is_none()).count();
        let plain: Vec<(f64, f64)> = plain.into_iter().flatten().collect();
        let mut csv = Table::new("marginal.csv", &["statistic", "ks_stat", "p_value"]);
        let (c_a, l_a): (Vec<f64>, Vec<f64>) = coupled.into_iter().unzip();
        let (c_b, l_b): (Vec<f64>, Vec<f64>) = plain.into_iter().unzip();
        ks_row(&mut csv, &mut rep, "mode1_coefficient", &c_a, &c_b)?;
        ks_row(&mut csv, &mut rep, "l2_norm_sq", &l_a, &l_b)?;
        rep.tables.push(csv);
        rep.result("marginal", json!({"t": cfg.t_marginal, "plain_blowups": plain_blowups}));
        rep.time("marginal", start);
    }

    if cfg.drift == DriftChoice::Zero && cfg.center == crate::config::Profile::Zero && cfg.m >= 2 {
        let start = Instant::now();
        let theta = grid.first_eigenvalue();
        let h = cfg.dt / 10.0;
        let sim = run_ensemble(cfg.m, threads, |i| {
            let mut s = NoiseStream::new(cfg.seed ^ ORACLE_SALT, i);
            Ok(oracle::simulate(d0, theta, h, cfg.t_max, &mut s))
        })?;
        let oracle_tau: Vec<f64> = sim.iter().map(|(t, _)| *t).collect();
        let tau_all: Vec<f64> = outcomes.iter().map(CouplingOutcome::time).collect();
        let two = ks_two_sample(&tau_all, &oracle_tau)?;
        let one = ks_one_sample(&tau_all, |t| oracle::cdf(d0, theta, t))?;
        rep.check(
            "eigenmode_oracle_ks",
            two.statistic <= 0.1,
            format!(
                "two-sample KS vs simulated 1-D oracle D = {:.4} (p = {:.3})",
                two.statistic, two.p_value
            ),
        );
        rep.result(
            "eigenmode_oracle",
            json!({
                "theta": theta,
                "ks_two_sample": {"statistic": two.statistic, "p_value": two.p_value},
                "ks_exact_law": {"statistic": one.statistic, "p_value": one.p_value},
                "exact_mean": oracle::mean(d0, theta),
                "oracle_censored": sim.iter().filter(|(_, c)| *c).count(),
            }),
        );
        rep.time("oracle", start);
    }
    Ok(rep)
}

fn ou_features(u_half: &Field, u: &Field, e1: &Field) -> [f64; 6] {
    let c = sine_coefficients(u);
    let a = u_half.dot(e1);
    [c[0], c[0] * c[0], c[1], c[1] * c[1], a * c[0], u.l2_norm_sq()]
}

const OU_STATS: [&str; 6] = ["c1", "c1_sq", "c2", "c2_sq", "c1_half_c1", "l2_norm_sq"];

fn ou_validate(cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle> {
    let mut rep = ReportBundle::new(cfg, threads);
    let (grid, solver) = grid_and_solver(cfg)?;
    let x0 = cfg.x1.field(&grid)?;
    let e1 = grid.sine_mode(1);
    let steps = solver.steps_for(cfg.t_max);
    let half = steps / 2;
    let t_half = half as f64 * cfg.dt;
    let t_end = steps as f64 * cfg.dt;
    let stepper = Stepper::new(grid, solver)?;
    let start = Instant::now();
    let sim = run_ensemble(cfg.m, threads, |i| {
        let mut s = NoiseStream::new(cfg.seed, i);
        let mut u = x0.clone();
        stepper.evolve(&mut u, &DriftSpec::Zero, half, &mut s)?;
        let u_half = u.clone();
        stepper.evolve(&mut u, &DriftSpec::Zero, steps - half, &mut s)?;
        Ok(ou_features(&u_half, &u, &e1))
    })?;
    rep.time("semi_implicit", start);
    let start = Instant::now();
    let sampler = OuSpectralSampler::new(grid, cfg.modes.unwrap_or(cfg.n), Eigenvalues::Discrete)?;
    let exact = run_ensemble(cfg.m, threads, |i| {
        let mut s = NoiseStream::new(cfg.seed ^ ORACLE_SALT, i);
        let u_half = sampler.sample(&x0, t_half, &mut s)?;
        let u = sampler.sample(&u_half, t_end - t_half, &mut s)?;
        Ok(ou_features(&u_half, &u, &e1))
    })?;
    rep.time("exact", start);

    let mut csv = Table::new(
        "ou_validate.csv",
        &["statistic", "sim_mean", "sim_se", "exact_mean", "exact_se", "z"],
    );
    for (q, name) in OU_STATS.iter().enumerate() {
        let a: Vec<f64> = sim.iter().map(|f| f[q]).collect();
        let b: Vec<f64> = exact.iter().map(|f| f[q]).collect();
        let ca = mean_ci(&a, LEVEL)?;
        let cb = mean_ci(&b, LEVEL)?;
        let z = (ca.mean - cb.mean) / (ca.std_err.powi(2) + cb.std_err.powi(2)).sqrt();
        csv.push(vec![
            name.to_string(),
            num(ca.mean),
            num(ca.std_err),
            num(cb.mean),
            num(cb.std_err),
            num(z),
        ]);
        rep.check(
            &format!("weak_{name}"),
            z.abs() <= 3.0,
            format!("simulated {:.6} vs exact {:.6}, z = {z:.3}", ca.mean, cb.mean),
        );
    }
    rep.tables.push(csv);
    let a: Vec<f64> = sim.iter().map(|f| f[0]).collect();
    let b: Vec<f64> = exact.iter().map(|f| f[0]).collect();
    let ks = ks_two_sample(&a, &b)?;
    rep.check(
        "law_c1",
        ks.p_value > TEST_LEVEL,
        format!(
            "two-sample KS on the mode-1 coefficient: D = {:.4}, p = {:.4}",
            ks.statistic, ks.p_value
        ),
    );
    rep.result("t_half", t_half);
    rep.result("t_end", t_end);
    Ok(rep)
}

fn generator(cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle> {
    if cfg.n > 8 || cfg.dt > 1e-5 || cfg.m < 100_000 {
        return config_err("generator_check needs n <= 8, dt <= 1e-5 and M >= 100000");
    }
    let mut rep = ReportBundle::new(cfg, threads);
    let (grid, solver) = grid_and_solver(cfg)?;
    let e1 = grid.sine_mode(1);
    let center = cfg.center.field(&grid)?;
    let mut x1 = center.clone();
    x1.axpy(0.5 * cfg.separation, &e1);
    let mut x2 = center.clone();
    x2.axpy(-0.5 * cfg.separation, &e1);
    let mut rows = Vec::new();
    let start = Instant::now();
    if matches!(cfg.test_function, TestFunction::Square | TestFunction::Both) {
        rows.push(generator_check(
            "square_zero_drift",
            &Square,
            &x1,
            &x2,
            &DriftSpec::Zero,
            &solver,
            cfg.m,
            cfg.seed,
            threads,
        )?);
    }
    if matches!(cfg.test_function, TestFunction::Lyapunov | TestFunction::Both) {
        let spec = DriftSpec::reaction_diffusion(cfg.alpha, cfg.beta, cfg.gamma, cfg.delta)?;
        let table = rd_table(cfg, cfg.r_max.max(2.0 * cfg.separation))?;
        rows.push(generator_check(
            "lyapunov_rd_drift",
            &table,
            &x1,
            &x2,
            &spec,
            &solver,
            cfg.m,
            cfg.seed,
            threads,
        )?);
    }
    rows.push(generator_check(
        "merged",
        &Square,
        &x1,
        &x1,
        &DriftSpec::Zero,
        &solver,
        1000,
        cfg.seed,
        threads,
    )?);
    rep.time("ensembles", start);
    let mut csv = Table::new(
        "generator.csv",
        &["case", "one_step_drift", "prediction", "residual", "std_err", "z"],
    );
    for row in &rows {
        let z = row.z_score();
        csv.push(vec![
            row.case.clone(),
            num(row.one_step_drift),
            num(row.prediction),
            num(row.residual),
            num(row.std_err),
            num(z),
        ]);
        rep.check(
            &format!("generator_{}", row.case),
            z.abs() <= 3.0,
            format!(
                "residual {:.5} +- {:.5} (z = {z:.3}), prediction {:.5}",
                row.residual, row.std_err, row.prediction
            ),
        );
    }
    rep.tables.push(csv);
    rep.result("rows", &rows);
    Ok(rep)
}

fn calibration_settings(cfg: &ExperimentConfig) -> CalibrationSettings {
    CalibrationSettings {
        n_interior: cfg.n,
        dt: cfg.dt,
        blowup_guard: cfg.blowup_guard,
        gamma_interp: cfg.gamma_interp,
        c_sob: cfg.c_sob,
        wait_coupling: cfg.wait_coupling,
        ..CalibrationSettings::default()
    }
}

fn record_calibration(rep: &mut ReportBundle, c: &CalibrationReport) {
    let mut csv = Table::new("calibration.csv", &["quantity", "value", "ci_lo", "ci_hi"]);
    for (name, e) in [
        ("alpha_hat", c.alpha_hat),
        ("K1_hat", c.k1_hat),
        ("K2_hat", c.k2_hat),
        ("K3_hat", c.k3_hat),
    ] {
        csv.push(vec![name.into(), num(e.value), num(e.lo), num(e.hi)]);
    }
    for (name, v) in [
        ("T0", c.t0),
        ("T", c.t),
        ("c_R", c.c_r),
        ("ln_f_R_at_2rho1", c.ln_f_r_at_2rho1),
    ] {
        csv.push(vec![name.into(), num(v), String::new(), String::new()]);
    }
    rep.tables.push(csv);
    rep.result(
        "calibration",
        json!({
            "rho0": c.rho0, "rho1": c.rho1, "R": c.r, "T0": c.t0, "T": c.t,
            "alpha_hat": [c.alpha_hat.value, c.alpha_hat.lo, c.alpha_hat.hi],
            "K1_hat": [c.k1_hat.value, c.k1_hat.lo, c.k1_hat.hi],
            "K2_hat": [c.k2_hat.value, c.k2_hat.lo, c.k2_hat.hi],
            "K3_hat": [c.k3_hat.value, c.k3_hat.lo, c.k3_hat.hi],
            "c_R": c.c_r,
            "ln_f_R_at_2rho1": c.ln_f_r_at_2rho1,
            "f_R_at_2rho1": c.f_r_at_2rho1,
            "f_R_at_2rho1_at_most_quarter": c.condition_313_ok,
            "radius_condition_with_K1_hat": c.condition_312_ok,
            "blowups": c.blowups,
        }),
    );
    rep.check(
        "moment_profile_dominated",
        c.moment_profile_dominated,
        "E|X(t)|_4^4 below (exp(-pi^2 t/16)|x|_4 + K2_hat)^4 on the sampled grid",
    );
}

fn calibrate_only(cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle> {
    let mut rep = ReportBundle::new(cfg, threads);
    let start = Instant::now();
    let r = cfg.r.expect("validated");
    let c = calibrate(
        cfg.rho0,
        cfg.rho1,
        r,
        cfg.mc_budget,
        cfg.seed ^ CALIBRATION_SALT,
        &calibration_settings(cfg),
    )?;
    rep.time("calibrate", start);
    record_calibration(&mut rep, &c);
    Ok(rep)
}

fn burgers_staged(cfg: &ExperimentConfig, threads: usize) -> Result<ReportBundle> {
    let mut rep = ReportBundle::new(cfg, threads);
    let radius = cfg.r.expect("validated");
    let start = Instant::now();
    let cal = calibrate(
        cfg.rho0,
        cfg.rho1,
        radius,
        cfg.mc_budget,
        cfg.seed ^ CALIBRATION_SALT,
        &calibration_settings(cfg),
    )?;
    rep.time("calibrate", start);
    record_calibration(&mut rep, &cal);
    let nu = match cfg.nu {
        Some(nu) => nu,
        None => cal.alpha_hat.value / (4.0 * cal.k2_hat.value.powi(4)),
    };
    if !(nu > 0.0 && nu.is_finite()) {
        return config_err(format!("calibrated nu = {nu} is not positive; set nu explicitly"));
    }
    let mut params = StagedParams::new(cfg.rho0, cfg.rho1, radius, nu)?;
    if let Some(t) = cfg.t_block {
        params.t = t;
    }
    params.dt = cfg.dt;
    params.blowup_guard = cfg.blowup_guard;
    params.eps_meet = cfg.eps_meet;
    params.bridge = cfg.bridge;
    params.wait_coupling = cfg.wait_coupling;
    params.validate()?;
    rep.result("nu", nu);
    rep.result("T0", params.t0);
    rep.result("T", params.t);

    let grid = Grid::new(cfg.n)?;
    let x1 = cfg.x1.field(&grid)?;
    let x2 = cfg.x2.field(&grid)?;
    let start = Instant::now();
    let traces: Vec<StagedTrace> = run_ensemble(cfg.m, threads, |i| {
        Ok(StagedRunner::new(grid, params)?.run(&x1, &x2, cfg.k_max, cfg.seed, i)?)
    })?;
    rep.time("staged_ensemble", start);
    let blowups = traces.iter().filter(|t| t.blowup).count();
    rep.result("blowups", blowups);
    rep.result(
        "entered_ball",
        traces
            .iter()
            .map(|t| t.blocks.iter().filter(|b| b.entered_ball).count())
            .sum::<usize>(),
    );
    rep.result(
        "truncation_exits",
        traces
            .iter()
            .map(|t| t.blocks.iter().filter(|b| b.truncation_exit).count())
            .sum::<usize>(),
    );

    let mut csv = Table::new("staged.csv", &["k", "p_uncoupled", "ci_lo", "ci_hi", "F_k"]);
    let mut p = Vec::with_capacity(cfg.k_max);
    let mut f_ci = Vec::with_capacity(cfg.k_max);
    for k in 1..=cfg.k_max {
        let valid: Vec<StagedTrace> = traces.iter().filter(|t| t.blocks.len() >= k).cloned().collect();
        if valid.len() < 2 {
            break;
        }
        let unc = valid.iter().filter(|t| t.coupled_at(k) == Some(false)).count();
        let (lo, hi) = clopper_pearson(unc, valid.len(), LEVEL)?;
        let f = kantorovich_ci(&valid, nu, k, LEVEL)?;
        let pk = unc as f64 / valid.len() as f64;
        csv.push(vec![k.to_string(), num(pk), num(lo), num(hi), num(f.mean)]);
        p.push(pk);
        f_ci.push(f);
    }
    rep.tables.push(csv);
    if p.len() >= 2 {
        let decreasing = (1..p.len().saturating_sub(1)).all(|i| p[i + 1] < p[i] || p[i] == 0.0);
        rep.check(
            "uncoupled_strictly_decreasing",
            decreasing,
            format!("P_hat(uncoupled at k) = {p:?}; strict decrease required from k = 2 until the first zero"),
        );
        let z = two_sided_z(LEVEL);
        let worst = f_ci
            .windows(2)
            .map(|w| (w[1].mean - w[0].mean) - z * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        rep.check(
            "kantorovich_nonincreasing",
            worst <= 0.0,
            format!("max over k of F_(k+1) - F_k - CI slack = {worst:.5}"),
        );
    }
    match fit_decay(&p) {
        Ok(fit) => {
            rep.check(
                "geometric_decay",
                fit.rate > 0.0 && fit.goodness >= 0.9,
                format!(
                    "rate = {:.4}, goodness = {:.4} over {} blocks",
                    fit.rate, fit.goodness, fit.points
                ),
            );
            rep.result("decay_fit", fit);
        }
        Err(CoreError::DegenerateFit(msg)) => rep.result("decay_fit_unavailable", msg),
        Err(e) => return Err(e.into()),
    }
    let start_ok = x1.l4_norm() <= cfg.rho0 && x2.l4_norm() <= cfg.rho0;
    if start_ok && x1 != x2 {
        let n1 = traces.iter().filter(|t| !t.blocks.is_empty()).count();
        let c1 = traces.iter().filter(|t| t.coupled_at(1) == Some(true)).count();
        if n1 > 0 {
            let (_, hi) = clopper_pearson(c1, n1, LEVEL)?;
            rep.check(
                "block_success_vs_alpha",
                hi >= 0.5 * cal.alpha_hat.value,
                format!(
                    "P_hat(coupled after block 1) = {:.4} (upper {hi:.4}) vs alpha_hat/2 = {:.4}",
                    c1 as f64 / n1 as f64,
                    0.5 * cal.alpha_hat.value
                ),
            );
        }
    }

    let start = Instant::now();
    let solver = params.solver_config()?;
    let block_steps = solver.steps_for(params.t);
    let stepper = Stepper::new(grid, solver)?;
    let k_last = cfg.k_max;
    let plain = run_ensemble(cfg.m, threads, |i| {
        let mut u = x1.clone();
        let mut s = NoiseStream::new(cfg.seed ^ PLAIN_SALT, i);
        let mut first = None;
        for k in 1..=k_last {
            match stepper.evolve(&mut u, &DriftSpec::Burgers, block_steps, &mut s) {
                Ok(()) => {}
                Err(CoreError::BlowUp { .. }) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
            if k == 1 {
                first = Some((u.l2_norm_sq(), u.l4_norm()));
            }
        }
        Ok(first.map(|f| (f, (u.l2_norm_sq(), u.l4_norm()))))
    })?;
    let plain: Vec<_> = plain.into_iter().flatten().collect();
    let mut csv = Table::new("marginal.csv", &["statistic", "ks_stat", "p_value"]);
    let full: Vec<&StagedTrace> = traces.iter().filter(|t| t.blocks.len() == k_last).collect();
    let pick = |k: usize, which: usize| -> Vec<f64> {
        full.iter()
            .map(|t| {
                let b = &t.blocks[k - 1];
                if which == 0 {
                    b.l2_sq_x1
                } else {
                    b.l4_x1
                }
            })
            .collect()
    };
    let plain_at = |last: bool, which: usize| -> Vec<f64> {
        plain
            .iter()
            .map(|(a, b)| {
                let v = if last { b } else { a };
                if which == 0 {
                    v.0
                } else {
                    v.1
                }
            })
            .collect()
    };
    ks_row(
        &mut csv,
        &mut rep,
        "l2_norm_sq_block1",
        &pick(1, 0),
        &plain_at(false, 0),
    )?;
    ks_row(&mut csv, &mut rep, "l4_norm_block1", &pick(1, 1), &plain_at(false, 1))?;
    if k_last > 1 {
        ks_row(
            &mut csv,
            &mut rep,
            &format!("l2_norm_sq_block{k_last}"),
            &pick(k_last, 0),
            &plain_at(true, 0),
        )?;
        ks_row(
            &mut csv,
            &mut rep,
            &format!("l4_norm_block{k_last}"),
            &pick(k_last, 1),
            &plain_at(true, 1),
        )?;
    }
    rep.tables.push(csv);
    rep.time("marginal", start);
    Ok(rep)
}
