//! Coupled two-trajectory dynamics.
//!
//! Before the meeting time the second trajectory receives the first one's
//! noise reflected across the hyperplane orthogonal to `e = (x1 - x2)/|x1 - x2|`
//! (and symmetrically), so the difference feels noise only along `e`, with
//! variance `4 dt` per step. After meeting both are driven by the same noise
//! and stay bitwise equal.
//!
//! Exact meeting has probability zero in discrete time. A step is declared a
//! meeting when any of the following holds for the post-step difference `D+`:
//!
//! - `|D+|_2 <= eps_meet`;
//! - `<D+, e> <= 0`, i.e. the difference crossed the hyperplane through 0
//!   orthogonal to the pre-step direction;
//! - (optional) a uniform draw falls below the Brownian-bridge crossing
//!   probability `exp(-|D| <D+, e> / (2 dt))` of the scalar distance process.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::grid_noise::{Field, Grid, NoiseStream};
use crate::spde_solvers::{DriftSpec, SolverConfig, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Reflecting,
    Merged,
}

#[derive(Debug, Clone)]
pub struct CoupledPair {
    x1: Field,
    x2: Field,
    t: f64,
    regime: Regime,
    merge_time: Option<f64>,
}

impl CoupledPair {
    /// Starts a pair at time 0. Pairs closer than `eps_meet` start merged.
    pub fn new(x1: Field, x2: Field, eps_meet: f64) -> Result<Self> {
        Self::at_time(x1, x2, 0.0, eps_meet)
    }

    pub fn at_time(x1: Field, mut x2: Field, t: f64, eps_meet: f64) -> Result<Self> {
        if x1.grid() != x2.grid() {
            return Err(Error::InvalidParameter("pair fields live on different grids".into()));
        }
        if !(eps_meet > 0.0) {
            return Err(Error::InvalidParameter(format!("eps_meet must be > 0, got {eps_meet}")));
        }
        let merged = (&x1 - &x2).l2_norm() <= eps_meet;
        if merged {
            x2.clone_from(&x1);
        }
        Ok(Self {
            x1,
            x2,
            t,
            regime: if merged { Regime::Merged } else { Regime::Reflecting },
            merge_time: merged.then_some(t),
        })
    }

    pub fn merged(x: Field, t: f64) -> Self {
        Self {
            x2: x.clone(),
            x1: x,
            t,
            regime: Regime::Merged,
            merge_time: Some(t),
        }
    }

    pub fn x1(&self) -> &Field {
        &self.x1
    }

    pub fn x2(&self) -> &Field {
        &self.x2
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn merge_time(&self) -> Option<f64> {
        self.merge_time
    }

    pub fn is_merged(&self) -> bool {
        self.regime == Regime::Merged
    }

    pub fn distance(&self) -> f64 {
        (&self.x1 - &self.x2).l2_norm()
    }

    pub fn into_fields(self) -> (Field, Field) {
        (self.x1, self.x2)
    }

    fn merge(&mut self, t: f64) {
        self.x2.clone_from(&self.x1);
        self.regime = Regime::Merged;
        self.merge_time = Some(t);
    }
}

/// How the two driving noises are combined while the pair is not merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMixing {
    /// Reflection coupling; the only mode in which meetings are detected.
    Reflection,
    /// Both trajectories receive `(dW1 + dW2)/sqrt 2`.
    Synchronous,
    /// `x1` receives `dW1`, `x2` receives `dW2`.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeetingRule {
    pub eps_meet: f64,
    pub bridge: bool,
}

impl MeetingRule {
    pub const DEFAULT_EPS: f64 = 1e-6;

    pub fn new(eps_meet: f64, bridge: bool) -> Result<Self> {
        if !(eps_meet > 0.0) {
            return Err(Error::InvalidParameter(format!("eps_meet must be > 0, got {eps_meet}")));
        }
        Ok(Self { eps_meet, bridge })
    }
}

impl Default for MeetingRule {
    fn default() -> Self {
        Self {
            eps_meet: Self::DEFAULT_EPS,
            bridge: true,
        }
    }
}

/// The three independent streams owned by one coupled trajectory.
#[derive(Debug, Clone)]
pub struct PairStreams {
    pub w1: NoiseStream,
    pub w2: NoiseStream,
    /// Uniforms for the bridge test.
    pub aux: NoiseStream,
}

impl PairStreams {
    pub fn for_trajectory(master_seed: u64, trajectory_id: u64) -> Self {
        let base = 3 * trajectory_id;
        Self {
            w1: NoiseStream::new(master_seed, base),
            w2: NoiseStream::new(master_seed, base + 1),
            aux: NoiseStream::new(master_seed, base + 2),
        }
    }
}

/// Householder reflection `v - 2 <v, e> e` for a unit `e`.
pub fn reflect(v: &Field, e: &Field) -> Result<Field> {
    if v.grid() != e.grid() {
        return Err(Error::InvalidParameter("fields live on different grids".into()));
    }
    let ee = e.dot(e);
    if (ee - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "reflection direction is not unit: <e,e> = {ee}"
        )));
    }
    let mut out = v.clone();
    out.axpy(-2.0 * v.dot(e), e);
    Ok(out)
}

/// Preallocated buffers and the cached stepper for coupled stepping.
#[derive(Debug, Clone)]
pub struct CouplingEngine {
    stepper: Stepper,
    dw1: Field,
    dw2: Field,
    n1: Field,
    n2: Field,
    e: Field,
    scratch: Vec<f64>,
}

impl CouplingEngine {
    pub fn new(grid: Grid, cfg: SolverConfig) -> Result<Self> {
        let stepper = Stepper::new(grid, cfg)?;
        let z = grid.zeros();
        Ok(Self {
            stepper,
            dw1: z.clone(),
            dw2: z.clone(),
            n1: z.clone(),
            n2: z.clone(),
            e: z,
            scratch: vec![0.0; grid.n_interior()],
        })
    }

    pub fn stepper(&self) -> &Stepper {
        &self.stepper
    }

    pub fn dt(&self) -> f64 {
        self.stepper.dt()
    }

    /// Draws fresh increments (and a uniform when the bridge test is on) and
    /// advances the pair. Returns true if the pair merged in this step.
    pub fn step(
        &mut self,
        pair: &mut CoupledPair,
        spec: &DriftSpec,
        mixing: NoiseMixing,
        rule: &MeetingRule,
        streams: &mut PairStreams,
    ) -> Result<bool> {
        let dt = self.dt();
        streams.w1.fill_white_increment(dt, &mut self.dw1);
        streams.w2.fill_white_increment(dt, &mut self.dw2);
        let u = if rule.bridge && mixing == NoiseMixing::Reflection && !pair.is_merged() {
            streams.aux.uniform()
        } else {
            1.0
        };
        self.advance(pair, spec, mixing, rule, u)
    }

    /// As [`CouplingEngine::step`] with caller-supplied increments; `bridge_u`
    /// is the uniform for the bridge test (pass 1.0 to disable it).
    #[allow(clippy::too_many_arguments)]
    pub fn step_with_increments(
        &mut self,
        pair: &mut CoupledPair,
        spec: &DriftSpec,
        mixing: NoiseMixing,
        rule: &MeetingRule,
        dw1: &Field,
        dw2: &Field,
        bridge_u: f64,
    ) -> Result<bool> {
        self.dw1.clone_from(dw1);
        self.dw2.clone_from(dw2);
        self.advance(pair, spec, mixing, rule, bridge_u)
    }

    fn advance(
        &mut self,
        pair: &mut CoupledPair,
        spec: &DriftSpec,
        mixing: NoiseMixing,
        rule: &MeetingRule,
        bridge_u: f64,
    ) -> Result<bool> {
        let dt = self.dt();
        let t_next = pair.t + dt;
        if pair.is_merged() {
            mix_sum(&self.dw1, &self.dw2, &mut self.n1);
            self.stepper
                .step_in_place(&mut pair.x1, spec, &self.n1, &mut self.scratch)?;
            pair.x2.clone_from(&pair.x1);
            pair.t = t_next;
            return Ok(false);
        }
        match mixing {
            NoiseMixing::Synchronous => {
                mix_sum(&self.dw1, &self.dw2, &mut self.n1);
                self.stepper
                    .step_in_place(&mut pair.x1, spec, &self.n1, &mut self.scratch)?;
                self.stepper
                    .step_in_place(&mut pair.x2, spec, &self.n1, &mut self.scratch)?;
            }
            NoiseMixing::Independent => {
                self.stepper
                    .step_in_place(&mut pair.x1, spec, &self.dw1, &mut self.scratch)?;
                self.stepper
                    .step_in_place(&mut pair.x2, spec, &self.dw2, &mut self.scratch)?;
            }
            NoiseMixing::Reflection => {
                if pair.x1.values() == pair.x2.values() {
                    // no direction to reflect across; the pair has already met
                    pair.merge(pair.t);
                    return self.advance(pair, spec, mixing, rule, bridge_u).map(|_| true);
                }
                return self.reflection_step(pair, spec, rule, bridge_u, t_next);
            }
        }
        pair.t = t_next;
        // synchronous contraction can make the pair equal in floating point
        if pair.x1.values() == pair.x2.values() {
            pair.merge(t_next);
            return Ok(true);
        }
        Ok(false)
    }

    fn reflection_step(
        &mut self,
        pair: &mut CoupledPair,
        spec: &DriftSpec,
        rule: &MeetingRule,
        bridge_u: f64,
        t_next: f64,
    ) -> Result<bool> {
        let r0 = {
            let e = self.e.values_mut();
            for ((v, a), b) in e.iter_mut().zip(pair.x1.values()).zip(pair.x2.values()) {
                *v = a - b;
            }
            let r0 = self.e.l2_norm();
            self.e.scale(1.0 / r0);
            r0
        };
        let p1 = self.dw1.dot(&self.e);
        let p2 = self.dw2.dot(&self.e);
        // n1 = (dW1 + R dW2)/sqrt2, n2 = (R dW1 + dW2)/sqrt2
        let e = self.e.values();
        for (((a, b), (w1, w2)), ev) in self
            .n1
            .values_mut()
            .iter_mut()
            .zip(self.n2.values_mut().iter_mut())
            .zip(self.dw1.values().iter().zip(self.dw2.values()))
            .zip(e)
        {
            let s = w1 + w2;
            *a = FRAC_1_SQRT_2 * (s - 2.0 * p2 * ev);
            *b = FRAC_1_SQRT_2 * (s - 2.0 * p1 * ev);
        }
        self.stepper
            .step_in_place(&mut pair.x1, spec, &self.n1, &mut self.scratch)?;
        self.stepper
            .step_in_place(&mut pair.x2, spec, &self.n2, &mut self.scratch)?;
        pair.t = t_next;

        let mut dist_sq = 0.0;
        let mut along = 0.0;
        for ((a, b), ev) in pair.x1.values().iter().zip(pair.x2.values()).zip(self.e.values()) {
            let d = a - b;
            dist_sq += d * d;
            along += d * ev;
        }
        let dx = pair.x1.grid().dx();
        let dist = (dist_sq * dx).sqrt();
        let along = along * dx;
        let met = dist <= rule.eps_meet
            || along <= 0.0
            || (rule.bridge && bridge_u < (-r0 * along / (2.0 * self.dt())).exp());
        if met {
            pair.merge(t_next);
        }
        Ok(met)
    }
}

fn mix_sum(a: &Field, b: &Field, out: &mut Field) {
    for ((o, x), y) in out.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
        *o = FRAC_1_SQRT_2 * (x + y);
    }
}

/// One reflection-coupled step with the threshold and crossing tests only.
pub fn coupled_step(
    pair: &CoupledPair,
    spec: &DriftSpec,
    cfg: &SolverConfig,
    dw1: &Field,
    dw2: &Field,
    eps_meet: f64,
) -> Result<CoupledPair> {
    let rule = MeetingRule::new(eps_meet, false)?;
    let mut engine = CouplingEngine::new(*pair.x1.grid(), *cfg)?;
    let mut out = pair.clone();
    engine.step_with_increments(&mut out, spec, NoiseMixing::Reflection, &rule, dw1, dw2, 1.0)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Met(f64),
    /// Not met by the given time (the horizon, or the blow-up time).
    Censored(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOutcome {
    pub trajectory_id: u64,
    pub tau: Tau,
    pub blowup: bool,
}

impl CouplingOutcome {
    pub fn met_time(&self) -> Option<f64> {
        match self.tau {
            Tau::Met(t) => Some(t),
            Tau::Censored(_) => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self.tau, Tau::Censored(_))
    }

    /// Meeting time, or the censoring time for censored outcomes.
    pub fn time(&self) -> f64 {
        match self.tau {
            Tau::Met(t) | Tau::Censored(t) => t,
        }
    }
}

/// Reflection-couples `x1`, `x2` until they meet or `t_max` is reached.
///
/// A blow-up ends the run with a censored outcome at the blow-up time and the
/// flag set.
#[allow(clippy::too_many_arguments)]
pub fn run_until_coupled(
    x1: &Field,
    x2: &Field,
    spec: &DriftSpec,
    cfg: &SolverConfig,
    t_max: f64,
    rule: &MeetingRule,
    master_seed: u64,
    trajectory_id: u64,
) -> Result<CouplingOutcome> {
    if !(t_max > 0.0) {
        return Err(Error::InvalidParameter(format!("t_max must be > 0, got {t_max}")));
    }
    let mut engine = CouplingEngine::new(*x1.grid(), *cfg)?;
    let mut streams = PairStreams::for_trajectory(master_seed, trajectory_id);
    let mut pair = CoupledPair::new(x1.clone(), x2.clone(), rule.eps_meet)?;
    let outcome = |tau, blowup| CouplingOutcome {
        trajectory_id,
        tau,
        blowup,
    };
    if pair.is_merged() {
        return Ok(outcome(Tau::Met(0.0), false));
    }
    let steps = cfg.steps_for(t_max).max(1);
    for k in 1..=steps {
        match engine.step(&mut pair, spec, NoiseMixing::Reflection, rule, &mut streams) {
            Ok(true) => return Ok(outcome(Tau::Met(k as f64 * cfg.dt), false)),
            Ok(false) => {}
            Err(Error::BlowUp { .. }) => return Ok(outcome(Tau::Censored(k as f64 * cfg.dt), true)),
            Err(e) => return Err(e),
        }
    }
    Ok(outcome(Tau::Censored(steps as f64 * cfg.dt), false))
}

/// Reflection-coupled run that keeps going after the meeting and reports the
/// pair at the requested times (rounded to the step grid, ascending).
///
/// Returns the outcome; `observe(i, pair)` is called for each time `times[i]`
/// reached before a blow-up.
#[allow(clippy::too_many_arguments)]
pub fn run_observed(
    x1: &Field,
    x2: &Field,
    spec: &DriftSpec,
    cfg: &SolverConfig,
    times: &[f64],
    rule: &MeetingRule,
    master_seed: u64,
    trajectory_id: u64,
    mut observe: impl FnMut(usize, &CoupledPair),
) -> Result<CouplingOutcome> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter(
            "observation times must be ascending and >= 0".into(),
        ));
    }
    let mut engine = CouplingEngine::new(*x1.grid(), *cfg)?;
    let mut streams = PairStreams::for_trajectory(master_seed, trajectory_id);
    let mut pair = CoupledPair::new(x1.clone(), x2.clone(), rule.eps_meet)?;
    let mut tau = pair.merge_time();
    let mut step = 0usize;
    for (i, &t) in times.iter().enumerate() {
        let target = cfg.steps_for(t);
        while step < target {
            match engine.step(&mut pair, spec, NoiseMixing::Reflection, rule, &mut streams) {
                Ok(merged) => {
                    step += 1;
                    if merged {
                        tau = Some(step as f64 * cfg.dt);
                    }
                }
                Err(Error::BlowUp { .. }) => {
                    return Ok(CouplingOutcome {
                        trajectory_id,
                        tau: Tau::Censored((step + 1) as f64 * cfg.dt),
                        blowup: true,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        observe(i, &pair);
    }
    Ok(CouplingOutcome {
        trajectory_id,
        tau: match tau {
            Some(t) => Tau::Met(t),
            None => Tau::Censored(step as f64 * cfg.dt),
        },
        blowup: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_noise::make_grid;

    fn random_field(grid: &Grid, s: &mut NoiseStream) -> Field {
        let v = (0..grid.n_interior()).map(|_| s.standard_normal()).collect();
        grid.field(v).unwrap()
    }

    #[test]
    fn reflect_basic_identities() {
        let g = make_grid(9).unwrap();
        let e = g.sine_mode(2);
        let r = reflect(&e, &e).unwrap();
        assert!(r.max_abs_diff(&e.scaled(-1.0)) < 1e-14);
        let v = g.sine_mode(5).scaled(3.0);
        assert!(reflect(&v, &e).unwrap().max_abs_diff(&v) < 1e-13);
        assert!(reflect(&v, &e.scaled(1.1)).is_err());
    }

    #[test]
    fn reflect_is_orthogonal_involution() {
        let g = make_grid(16).unwrap();
        let mut s = NoiseStream::new(3, 0);
        for _ in 0..50 {
            let v = random_field(&g, &mut s);
            let w = random_field(&g, &mut s);
            let e = w.scaled(1.0 / w.l2_norm());
            let rv = reflect(&v, &e).unwrap();
            assert!(reflect(&rv, &e).unwrap().max_abs_diff(&v) < 1e-12);
            assert!((rv.l2_norm() - v.l2_norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn close_pair_starts_merged() {
        let g = make_grid(8).unwrap();
        let x = g.sine_mode(1);
        let p = CoupledPair::new(x.clone(), &x + &g.zeros(), 1e-6).unwrap();
        assert!(p.is_merged());
        assert_eq!(p.merge_time(), Some(0.0));
    }

    #[test]
    fn merged_pair_stays_bitwise_equal() {
        let g = make_grid(8).unwrap();
        let cfg = SolverConfig::new(1e-3, 1e6).unwrap();
        let mut engine = CouplingEngine::new(g, cfg).unwrap();
        let mut pair = CoupledPair::merged(g.sine_mode(1), 0.0);
        let mut streams = PairStreams::for_trajectory(1, 0);
        let spec = DriftSpec::reaction_diffusion(1.0, 0.5, 1.0, 0.2).unwrap();
        for mixing in [
            NoiseMixing::Reflection,
            NoiseMixing::Independent,
            NoiseMixing::Synchronous,
        ] {
            for _ in 0..100 {
                engine
                    .step(&mut pair, &spec, mixing, &MeetingRule::default(), &mut streams)
                    .unwrap();
                assert_eq!(pair.x1().values(), pair.x2().values());
            }
        }
    }

    #[test]
    fn identical_start_has_zero_tau() {
        let g = make_grid(8).unwrap();
        let cfg = SolverConfig::new(1e-3, 1e6).unwrap();
        let x = g.sine_mode(1);
        let out = run_until_coupled(&x, &x, &DriftSpec::Zero, &cfg, 1.0, &MeetingRule::default(), 0, 0).unwrap();
        assert_eq!(out.tau, Tau::Met(0.0));
    }

    #[test]
    fn one_step_horizon_censors_far_pairs() {
        let g = make_grid(8).unwrap();
        let cfg = SolverConfig::new(1e-4, 1e6).unwrap();
        let x = g.sine_mode(1).scaled(50.0);
        let out = run_until_coupled(
            &x,
            &x.scaled(-1.0),
            &DriftSpec::Zero,
            &cfg,
            1e-4,
            &MeetingRule::default(),
            0,
            0,
        )
        .unwrap();
        assert_eq!(out.tau, Tau::Censored(1e-4));
        assert!(!out.blowup);
    }

    #[test]
    fn crossing_the_hyperplane_merges() {
        let g = make_grid(8).unwrap();
        let cfg = SolverConfig::new(1e-3, 1e6).unwrap();
        let e = g.sine_mode(1);
        let pair = CoupledPair::new(e.scaled(0.01), e.scaled(-0.01), 1e-6).unwrap();
        // dW1 - dW2 pushes the difference by -2 * 0.1 * sqrt2 along e
        let dw1 = e.scaled(-0.1);
        let dw2 = e.scaled(0.1);
        let out = coupled_step(&pair, &DriftSpec::Zero, &cfg, &dw1, &dw2, 1e-6).unwrap();
        assert!(out.is_merged());
        assert_eq!(out.merge_time(), Some(1e-3));
        assert_eq!(out.x1().values(), out.x2().values());
    }

    #[test]
    fn difference_noise_has_variance_four_dt() {
        let g = make_grid(8).unwrap();
        let dt = 1e-3;
        let e = g.sine_mode(1);
        let mut s = PairStreams::for_trajectory(11, 0);
        let (mut dw1, mut dw2) = (g.zeros(), g.zeros());
        let m = 100_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..m {
            s.w1.fill_white_increment(dt, &mut dw1);
            s.w2.fill_white_increment(dt, &mut dw2);
            let n1 = (&dw1 + &reflect(&dw2, &e).unwrap()).scaled(FRAC_1_SQRT_2);
            let n2 = (&reflect(&dw1, &e).unwrap() + &dw2).scaled(FRAC_1_SQRT_2);
            let p = (&n1 - &n2).dot(&e);
            acc += p * p;
            acc2 += p.powi(4);
        }
        let var = acc / m as f64;
        let se = ((acc2 / m as f64 - var * var) / m as f64).sqrt();
        assert!((var - 4.0 * dt).abs() < 3.0 * se, "{var} vs {}", 4.0 * dt);
    }
}
