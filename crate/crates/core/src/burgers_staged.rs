//! Block-wise coupling for the stochastic Burgers equation.
//!
//! Each block of length `T` starts with a wait phase of length
//! `T0 = (16/pi^2) ln(2 rho0 / rho1)` under the full Burgers drift. If both
//! trajectories started in the `rho0`-ball of `L^4` and both are in the
//! `rho1`-ball at `T0`, the rest of the block runs the reflection coupling
//! of the cut-off equation until either marginal leaves the `R`-ball (after
//! which both follow full Burgers with shared noise). Otherwise the whole
//! block is a wait phase. Merged pairs stay merged.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid_noise::{Field, Grid};
use crate::lyapunov::{build_f_r_with_knots, cutoff_drift_constant, Which, DEFAULT_QUAD_TOL};
use crate::reflection_coupling::{CoupledPair, CouplingEngine, MeetingRule, NoiseMixing, PairStreams};
use crate::spde_solvers::{DriftSpec, SolverConfig, Stepper};
use crate::stats::{clopper_pearson, mean_ci, MeanCi};
use crate::NoiseStream;

/// `T(rho0, rho1) = (16/pi^2) ln(2 rho0 / rho1)`: the deterministic flow
/// takes the `rho0`-ball into the `rho1/2`-ball within this time.
pub fn wait_time(rho0: f64, rho1: f64) -> Result<f64> {
    if !(rho0 > 0.0) || !(rho1 > 0.0) || !(rho1 < 2.0 * rho0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < rho1 < 2 rho0, got rho0 = {rho0}, rho1 = {rho1}"
        )));
    }
    Ok(16.0 / (PI * PI) * (2.0 * rho0 / rho1).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitCoupling {
    Synchronous,
    Independent,
}

impl WaitCoupling {
    fn mixing(self) -> NoiseMixing {
        match self {
            WaitCoupling::Synchronous => NoiseMixing::Synchronous,
            WaitCoupling::Independent => NoiseMixing::Independent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagedParams {
    pub rho0: f64,
    pub rho1: f64,
    pub r: f64,
    pub t0: f64,
    pub t: f64,
    pub nu: f64,
    pub eps_meet: f64,
    pub dt: f64,
    pub blowup_guard: f64,
    pub wait_coupling: WaitCoupling,
    pub bridge: bool,
}

impl StagedParams {
    /// Parameters with `T0 = T(rho0, rho1)`, `T = T0 + 1` and default numerics.
    pub fn new(rho0: f64, rho1: f64, r: f64, nu: f64) -> Result<Self> {
        let t0 = wait_time(rho0, rho1)?;
        let p = Self {
            rho0,
            rho1,
            r,
            t0,
            t: t0 + 1.0,
            nu,
            eps_meet: MeetingRule::DEFAULT_EPS,
            dt: 1e-3,
            blowup_guard: 1e3,
            wait_coupling: WaitCoupling::Synchronous,
            bridge: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.rho0 > 0.0 && self.rho1 > 0.0) {
            return bad(format!("rho0, rho1 must be > 0, got {}, {}", self.rho0, self.rho1));
        }
        if !(self.rho1 <= 1.0) {
            return bad(format!("rho1 must be <= 1, got {}", self.rho1));
        }
        if !(self.r > self.rho0.max(self.rho1)) {
            return bad(format!("R = {} must exceed max(rho0, rho1)", self.r));
        }
        if !(self.t0 > 0.0 && self.t > self.t0) {
            return bad(format!("need T > T0 > 0, got T0 = {}, T = {}", self.t0, self.t));
        }
        if !(self.nu > 0.0) {
            return bad(format!("nu must be > 0, got {}", self.nu));
        }
        MeetingRule::new(self.eps_meet, self.bridge)?;
        SolverConfig::new(self.dt, self.blowup_guard)?;
        Ok(())
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        SolverConfig::new(self.dt, self.blowup_guard)
    }

    fn rule(&self) -> MeetingRule {
        MeetingRule {
            eps_meet: self.eps_meet,
            bridge: self.bridge,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockOutcome {
    pub entered_ball: bool,
    pub truncation_exit: bool,
    pub coupled_at_end: bool,
    pub end_state: CoupledPair,
}

/// Summary of one block kept in a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRecord {
    pub entered_ball: bool,
    pub truncation_exit: bool,
    pub coupled: bool,
    pub l4_x1: f64,
    pub l4_x2: f64,
    pub l2_sq_x1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagedTrace {
    pub trajectory_id: u64,
    /// Block `k` (1-based) is `blocks[k - 1]`.
    pub blocks: Vec<BlockRecord>,
    /// Set if a blow-up ended the trace early; `blocks` then holds the
    /// completed blocks only.
    pub blowup: bool,
}

impl StagedTrace {
    pub fn coupled_at(&self, k: usize) -> Option<bool> {
        k.checked_sub(1).and_then(|i| self.blocks.get(i)).map(|b| b.coupled)
    }
}

/// Runs staged blocks with reused buffers.
#[derive(Debug, Clone)]
pub struct StagedRunner {
    params: StagedParams,
    engine: CouplingEngine,
    burgers: DriftSpec,
    cutoff: DriftSpec,
    wait_steps: usize,
    block_steps: usize,
}

impl StagedRunner {
    pub fn new(grid: Grid, params: StagedParams) -> Result<Self> {
        params.validate()?;
        let cfg = params.solver_config()?;
        let wait_steps = cfg.steps_for(params.t0);
        let block_steps = cfg.steps_for(params.t);
        if block_steps <= wait_steps {
            return Err(Error::InvalidParameter(
                "block shorter than wait phase on the step grid".into(),
            ));
        }
        Ok(Self {
            params,
            engine: CouplingEngine::new(grid, cfg)?,
            burgers: DriftSpec::Burgers,
            cutoff: DriftSpec::cutoff_burgers(params.r)?,
            wait_steps,
            block_steps,
        })
    }

    pub fn params(&self) -> &StagedParams {
        &self.params
    }

    /// Advances `pair` by one block.
    pub fn block(&mut self, pair: &mut CoupledPair, streams: &mut PairStreams) -> Result<BlockOutcome> {
        let p = self.params;
        let rule = p.rule();
        let wait = p.wait_coupling.mixing();
        let mut entered = false;
        let mut truncated = false;
        if pair.is_merged() {
            for _ in 0..self.block_steps {
                self.engine.step(pair, &self.burgers, wait, &rule, streams)?;
            }
        } else {
            let start_ok = pair.x1().l4_norm() <= p.rho0 && pair.x2().l4_norm() <= p.rho0;
            for _ in 0..self.wait_steps {
                self.engine.step(pair, &self.burgers, wait, &rule, streams)?;
            }
            entered = start_ok && pair.x1().l4_norm() <= p.rho1 && pair.x2().l4_norm() <= p.rho1;
            let rest = self.block_steps - self.wait_steps;
            if entered {
                for _ in 0..rest {
                    if pair.is_merged() {
                        self.engine.step(pair, &self.burgers, wait, &rule, streams)?;
                    } else if truncated {
                        self.engine
                            .step(pair, &self.burgers, NoiseMixing::Synchronous, &rule, streams)?;
                    } else {
                        self.engine
                            .step(pair, &self.cutoff, NoiseMixing::Reflection, &rule, streams)?;
                        truncated = pair.x1().l4_norm().max(pair.x2().l4_norm()) > p.r;
                    }
                }
            } else {
                for _ in 0..rest {
                    self.engine.step(pair, &self.burgers, wait, &rule, streams)?;
                }
            }
        }
        Ok(BlockOutcome {
            entered_ball: entered,
            truncation_exit: truncated,
            coupled_at_end: pair.is_merged(),
            end_state: pair.clone(),
        })
    }

    /// Iterates `k_max` blocks from `(x1, x2)` with the trajectory's streams.
    pub fn run(
        &mut self,
        x1: &Field,
        x2: &Field,
        k_max: usize,
        master_seed: u64,
        trajectory_id: u64,
    ) -> Result<StagedTrace> {
        if k_max < 1 {
            return Err(Error::InvalidParameter("k_max must be >= 1".into()));
        }
        let mut streams = PairStreams::for_trajectory(master_seed, trajectory_id);
        let mut pair = CoupledPair::new(x1.clone(), x2.clone(), self.params.eps_meet)?;
        let mut blocks = Vec::with_capacity(k_max);
        for _ in 0..k_max {
            match self.block(&mut pair, &mut streams) {
                Ok(b) => blocks.push(BlockRecord {
                    entered_ball: b.entered_ball,
                    truncation_exit: b.truncation_exit,
                    coupled: b.coupled_at_end,
                    l4_x1: pair.x1().l4_norm(),
                    l4_x2: pair.x2().l4_norm(),
                    l2_sq_x1: pair.x1().l2_norm_sq(),
                }),
                Err(Error::BlowUp { .. }) => {
                    return Ok(StagedTrace {
                        trajectory_id,
                        blocks,
                        blowup: true,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(StagedTrace {
            trajectory_id,
            blocks,
            blowup: false,
        })
    }
}

/// One block from `pair` (which must sit at a block boundary).
pub fn staged_block(pair: CoupledPair, params: &StagedParams, streams: &mut PairStreams) -> Result<BlockOutcome> {
    let mut runner = StagedRunner::new(*pair.x1().grid(), *params)?;
    let mut pair = pair;
    runner.block(&mut pair, streams)
}

pub fn run_staged(
    x1: &Field,
    x2: &Field,
    params: &StagedParams,
    k_max: usize,
    master_seed: u64,
    trajectory_id: u64,
) -> Result<StagedTrace> {
    StagedRunner::new(*x1.grid(), *params)?.run(x1, x2, k_max, master_seed, trajectory_id)
}

fn kantorovich_samples(traces: &[StagedTrace], nu: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("block index k is 1-based".into()));
    }
    traces
        .iter()
        .map(|tr| {
            let b = tr
                .blocks
                .get(k - 1)
                .ok_or_else(|| Error::InvalidParameter(format!("trace {} has no block {k}", tr.trajectory_id)))?;
            Ok(if b.coupled {
                0.0
            } else {
                1.0 + nu * (b.l4_x1.powi(4) + b.l4_x2.powi(4))
            })
        })
        .collect()
}

/// `F_k = E[(1 + nu(|X1|_4^4 + |X2|_4^4)) 1{X1 != X2}]` at the end of block `k`.
pub fn kantorovich(traces: &[StagedTrace], nu: f64, k: usize) -> Result<f64> {
    let s = kantorovich_samples(traces, nu, k)?;
    if s.is_empty() {
        return Err(Error::InsufficientData("no traces".into()));
    }
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// [`kantorovich`] with a normal-approximation confidence interval.
pub fn kantorovich_ci(traces: &[StagedTrace], nu: f64, k: usize, level: f64) -> Result<MeanCi> {
    mean_ci(&kantorovich_samples(traces, nu, k)?, level)
}

/// A point estimate with a confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Numerical settings of [`calibrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    pub n_interior: usize,
    pub dt: f64,
    pub blowup_guard: f64,
    pub gamma_interp: f64,
    pub c_sob: f64,
    /// The `delta` of the running-supremum bound `4|x|^4 + K1 (1 + t^delta)`.
    pub delta: f64,
    pub wait_coupling: WaitCoupling,
    /// Spacing of the time grid on which moments are sampled.
    pub moment_dt: f64,
    pub level: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n_interior: 32,
            dt: 1e-3,
            blowup_guard: 1e3,
            gamma_interp: crate::lyapunov::DEFAULT_GAMMA_INTERP,
            c_sob: crate::spde_solvers::INTERPOLATION_CONSTANT,
            delta: 1.0,
            wait_coupling: WaitCoupling::Synchronous,
            moment_dt: 0.1,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rho0: f64,
    pub rho1: f64,
    pub r: f64,
    pub t0: f64,
    pub t: f64,
    pub alpha_hat: Estimate,
    pub c_r: f64,
    /// `ln f_R(2 rho1)`; the value itself is usually far beyond `f64`.
    pub ln_f_r_at_2rho1: f64,
    pub f_r_at_2rho1: Option<f64>,
    pub condition_312_ok: bool,
    pub condition_313_ok: bool,
    pub k1_hat: Estimate,
    pub k2_hat: Estimate,
    pub k3_hat: Estimate,
    pub delta: f64,
    /// `E|X(t)|_4^4` stays below `(e^{-pi^2 t/16}|x|_4 + K2_hat)^4` on the
    /// sampled grid for every start.
    pub moment_profile_dominated: bool,
    pub blowups: usize,
}

/// Start of norm `rho` in `L^4`, shaped as the first sine mode.
pub fn ball_boundary_start(grid: &Grid, rho: f64) -> Field {
    let s = grid.sine_mode(1);
    s.scaled(rho / s.l4_norm())
}

/// Estimates the constants the staged construction depends on.
///
/// `alpha_hat` is the frequency with which both trajectories started from
/// `+-x` with `|x|_4 = rho0` are in the `rho1`-ball at `T0`. The moment
/// constants are read off single-trajectory ensembles from `0` and from the
/// `rho0`-sphere over `[0, T0 + 1]`.
pub fn calibrate(
    rho0: f64,
    rho1: f64,
    r: f64,
    mc_budget: usize,
    master_seed: u64,
    settings: &CalibrationSettings,
) -> Result<CalibrationReport> {
    if !(rho1 <= rho0) {
        return Err(Error::InvalidParameter(format!("rho1 = {rho1} exceeds rho0 = {rho0}")));
    }
    if mc_budget < 100 {
        return Err(Error::InvalidParameter(format!(
            "mc_budget must be >= 100, got {mc_budget}"
        )));
    }
    if !(r > rho0) {
        return Err(Error::InvalidParameter(format!("R = {r} must exceed rho0 = {rho0}")));
    }
    let t0 = wait_time(rho0, rho1)?;
    let t = t0 + 1.0;
    let grid = Grid::new(settings.n_interior)?;
    let cfg = SolverConfig::new(settings.dt, settings.blowup_guard)?;
    let rule = MeetingRule::default();
    let burgers = DriftSpec::Burgers;
    let x0 = ball_boundary_start(&grid, rho0);
    let mut blowups = 0;

    // small-ball frequency
    let mut engine = CouplingEngine::new(grid, cfg)?;
    let wait_steps = cfg.steps_for(t0);
    let mut hits = 0;
    let mut trials = 0;
    for i in 0..mc_budget as u64 {
        let mut streams = PairStreams::for_trajectory(master_seed, i);
        let mut pair = CoupledPair::new(x0.clone(), x0.scaled(-1.0), rule.eps_meet)?;
        let mut ok = true;
        for _ in 0..wait_steps {
            if let Err(e) = engine.step(
                &mut pair,
                &burgers,
                settings.wait_coupling.mixing(),
                &rule,
                &mut streams,
            ) {
                match e {
                    Error::BlowUp { .. } => {
                        ok = false;
                        break;
                    }
                    e => return Err(e),
                }
            }
        }
        if !ok {
            blowups += 1;
            continue;
        }
        trials += 1;
        if pair.x1().l4_norm() <= rho1 && pair.x2().l4_norm() <= rho1 {
            hits += 1;
        }
    }
    if trials == 0 {
        return Err(Error::InsufficientData("every calibration trajectory blew up".into()));
    }
    let (lo, hi) = clopper_pearson(hits, trials, settings.level)?;
    let alpha_hat = Estimate {
        value: hits as f64 / trials as f64,
        lo,
        hi,
    };

    // moment constants
    let stepper = Stepper::new(grid, cfg)?;
    let sample_every = cfg.steps_for(settings.moment_dt).max(1);
    let total_steps = cfg.steps_for(t);
    let n_samples = total_steps / sample_every;
    let times: Vec<f64> = (1..=n_samples).map(|j| (j * sample_every) as f64 * cfg.dt).collect();
    let mut k1 = [0.0f64; 3];
    let mut k2 = [0.0f64; 3];
    let mut k3 = [0.0f64; 3];
    let mut dominated_data = Vec::new();
    for (s_idx, start) in [grid.zeros(), x0.clone()].into_iter().enumerate() {
        let mut pow4 = vec![Vec::with_capacity(mc_budget); n_samples];
        let mut sup4 = vec![Vec::with_capacity(mc_budget); n_samples];
        for i in 0..mc_budget as u64 {
            let mut stream = NoiseStream::new(master_seed ^ 0x9e37_79b9_7f4a_7c15, 2 * i + s_idx as u64);
            let mut u = start.clone();
            let mut dw = grid.zeros();
            let mut scratch = vec![0.0; grid.n_interior()];
            let mut run_sup = u.l4_norm_pow4();
            let mut row4 = Vec::with_capacity(n_samples);
            let mut rows = Vec::with_capacity(n_samples);
            let mut failed = false;
            for step in 1..=n_samples * sample_every {
                stream.fill_white_increment(cfg.dt, &mut dw);
                if let Err(e) = stepper.step_in_place(&mut u, &burgers, &dw, &mut scratch) {
                    match e {
                        Error::BlowUp { .. } => {
                            failed = true;
                            break;
                        }
                        e => return Err(e),
                    }
                }
                let v = u.l4_norm_pow4();
                run_sup = run_sup.max(v);
                if step % sample_every == 0 {
                    row4.push(v);
                    rows.push(run_sup);
                }
            }
            if failed {
                blowups += 1;
                continue;
            }
            for j in 0..n_samples {
                pow4[j].push(row4[j]);
                sup4[j].push(rows[j]);
            }
        }
        let x4 = start.l4_norm_pow4();
        let x_l4 = start.l4_norm();
        let x_l2 = start.l2_norm();
        for (j, &tj) in times.iter().enumerate() {
            let m = mean_ci(&pow4[j], settings.level)?;
            let s = mean_ci(&sup4[j], settings.level)?;
            let denom1 = 1.0 + tj.powf(settings.delta);
            let decay = (-PI * PI * tj / 16.0).exp() * x_l4;
            for (slot, (mv, sv)) in [(m.mean, s.mean), (m.lo.max(0.0), s.lo.max(0.0)), (m.hi, s.hi)]
                .into_iter()
                .enumerate()
            {
                k1[slot] = k1[slot].max((sv - 4.0 * x4) / denom1);
                k2[slot] = k2[slot].max(mv.powf(0.25) - decay);
                k3[slot] = k3[slot].max(mv / (1.0 + x_l2.powi(4)));
            }
            dominated_data.push((m.mean, decay));
        }
    }
    let est = |v: [f64; 3]| Estimate {
        value: v[0],
        lo: v[1],
        hi: v[2],
    };
    let k2_hat = est(k2);
    let moment_profile_dominated = dominated_data
        .iter()
        .all(|(m, decay)| *m <= (decay + k2_hat.value).powi(4) * (1.0 + 1e-12));

    let c_r = cutoff_drift_constant(r, settings.gamma_interp, settings.c_sob)?;
    let table = build_f_r_with_knots(
        r,
        settings.gamma_interp,
        settings.c_sob,
        2.0 * rho1,
        DEFAULT_QUAD_TOL,
        400,
    )?;
    let ln_f = table.eval_ln(2.0 * rho1, Which::F)?;
    let f_lin = ln_f.exp();
    let k1_hat = est(k1);
    Ok(CalibrationReport {
        rho0,
        rho1,
        r,
        t0,
        t,
        alpha_hat,
        c_r,
        ln_f_r_at_2rho1: ln_f,
        f_r_at_2rho1: f_lin.is_finite().then_some(f_lin),
        condition_312_ok: (8.0 + 4.0 * k1_hat.value) / r.powi(4) <= 0.25,
        condition_313_ok: ln_f <= 0.25f64.ln(),
        k1_hat,
        k2_hat,
        k3_hat: est(k3),
        delta: settings.delta,
        moment_profile_dominated,
        blowups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spde_solvers::solve_deterministic_burgers;

    #[test]
    fn wait_time_formula() {
        assert!((wait_time(2.0, 1.0).unwrap() - 16.0 / (PI * PI) * 4f64.ln()).abs() < 1e-14);
        assert!((wait_time(2.0, 1.0).unwrap() - 2.2474).abs() < 1e-4);
        assert!((wait_time(1.0, 1.0).unwrap() - 16.0 / (PI * PI) * 2f64.ln()).abs() < 1e-14);
        assert!(wait_time(1.0, 2.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(StagedParams::new(1.0, 0.4, 3.0, 0.1).is_ok());
        assert!(StagedParams::new(1.0, 0.4, 0.9, 0.1).is_err());
        assert!(StagedParams::new(3.0, 1.5, 4.0, 0.1).is_err());
        let mut p = StagedParams::new(1.0, 0.4, 3.0, 0.1).unwrap();
        p.t = p.t0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn merged_start_stays_coupled() {
        let g = Grid::new(8).unwrap();
        let mut p = StagedParams::new(1.0, 0.4, 3.0, 0.1).unwrap();
        p.dt = 1e-2;
        let x = g.sine_mode(1).scaled(0.3);
        let tr = run_staged(&x, &x, &p, 3, 1, 0).unwrap();
        assert!(tr.blocks.iter().all(|b| b.coupled));
        assert!(tr.blocks.iter().all(|b| b.l4_x1 == b.l4_x2));
    }

    #[test]
    fn start_outside_ball_skips_reflection() {
        let g = Grid::new(8).unwrap();
        let mut p = StagedParams::new(1.0, 0.4, 3.0, 0.1).unwrap();
        p.dt = 1e-2;
        let x1 = ball_boundary_start(&g, 2.0);
        let x2 = ball_boundary_start(&g, 0.5);
        let pair = CoupledPair::new(x1, x2, p.eps_meet).unwrap();
        let mut streams = PairStreams::for_trajectory(5, 0);
        let out = staged_block(pair, &p, &mut streams).unwrap();
        assert!(!out.entered_ball);
        assert!(!out.coupled_at_end);
    }

    #[test]
    fn kantorovich_trivial_cases() {
        let rec = |coupled| BlockRecord {
            entered_ball: false,
            truncation_exit: false,
            coupled,
            l4_x1: 0.0,
            l4_x2: 0.0,
            l2_sq_x1: 0.0,
        };
        let tr = |c| StagedTrace {
            trajectory_id: 0,
            blocks: vec![rec(c)],
            blowup: false,
        };
        assert_eq!(kantorovich(&[tr(true), tr(true)], 3.0, 1).unwrap(), 0.0);
        assert_eq!(kantorovich(&[tr(false), tr(false)], 3.0, 1).unwrap(), 1.0);
        assert!(kantorovich(&[tr(false)], 3.0, 2).is_err());
    }

    #[test]
    fn deterministic_flow_reaches_half_ball() {
        let g = Grid::new(63).unwrap();
        let (rho0, rho1) = (1.0, 0.4);
        let t0 = wait_time(rho0, rho1).unwrap();
        let cfg = SolverConfig::new(1e-3, 1e6).unwrap();
        for shape in [
            g.sine_mode(1),
            &g.sine_mode(1) + &g.sine_mode(2).scaled(0.7),
            g.from_fn(|x| x * (1.0 - x) * (x - 0.3)),
        ] {
            let x0 = shape.scaled(rho0 / shape.l4_norm());
            let end = solve_deterministic_burgers(&x0, t0, &cfg).unwrap();
            assert!(end.l4_norm() <= 0.5 * rho1 * 1.05, "{}", end.l4_norm());
        }
    }
}
