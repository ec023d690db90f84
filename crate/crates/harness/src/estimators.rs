//! Estimators over coupling-time ensembles and staged traces.

use serde::Serialize;
use spde_coupling::lyapunov::{LyapunovTable, Which};
use spde_coupling::reflection_coupling::CouplingOutcome;
use spde_coupling::stats::{clopper_pearson, linear_fit, mean_ci, MeanCi};
use spde_coupling::{Error as CoreError, Result as CoreResult};

/// Fewest uncensored meeting times accepted by [`estimate_tau_stats`].
pub const MIN_UNCENSORED: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// Fraction of trajectories with `tau >= t`.
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `P(tau >= t)` on `times` with Clopper-Pearson intervals. A trajectory
/// censored at `c` counts as surviving for all `t <= c`.
pub fn survival_curve(outcomes: &[CouplingOutcome], times: &[f64], level: f64) -> CoreResult<Vec<SurvivalPoint>> {
    let n = outcomes.len();
    times
        .iter()
        .map(|&t| {
            let alive = outcomes
                .iter()
                .filter(|o| match o.met_time() {
                    Some(tau) => tau >= t,
                    None => o.time() >= t,
                })
                .count();
            let (ci_lo, ci_hi) = clopper_pearson(alive, n, level)?;
            Ok(SurvivalPoint {
                t,
                p_hat: alive as f64 / n as f64,
                ci_lo,
                ci_hi,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauStats {
    pub n: usize,
    pub uncensored: usize,
    pub censored: usize,
    pub blowups: usize,
    /// Over uncensored samples.
    pub mean: MeanCiJson,
    pub survival: Vec<SurvivalPoint>,
    pub lambda: f64,
    /// `f(|x1 - x2|_2)`.
    pub f_d0: f64,
    /// Mean of `exp(tau / (2 Lambda^2))` over uncensored samples.
    pub exp_moment: f64,
    /// Same mean over all samples with censored ones at their censoring
    /// time: a lower bound for the full-sample moment.
    pub exp_moment_lower: f64,
    /// `-d/dt ln P(tau >= t)` fitted on the positive part of the curve.
    pub tail_rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCiJson {
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
    pub lo: f64,
    pub hi: f64,
}

impl From<MeanCi> for MeanCiJson {
    fn from(c: MeanCi) -> Self {
        Self {
            n: c.n,
            mean: c.mean,
            std_err: c.std_err,
            lo: c.lo,
            hi: c.hi,
        }
    }
}

pub fn estimate_tau_stats(
    outcomes: &[CouplingOutcome],
    table: &LyapunovTable,
    d0: f64,
    times: &[f64],
    level: f64,
) -> CoreResult<TauStats> {
    let met: Vec<f64> = outcomes.iter().filter_map(|o| o.met_time()).collect();
    if met.len() < MIN_UNCENSORED {
        return Err(CoreError::InsufficientData(format!(
            "{} uncensored meeting times, need {MIN_UNCENSORED}",
            met.len()
        )));
    }
    let lambda = table
        .lambda_bound()
        .ok_or_else(|| CoreError::InvalidParameter("table has no Lambda".into()))?;
    let scale = 1.0 / (2.0 * lambda * lambda);
    let exp_moment = met.iter().map(|t| (t * scale).exp()).sum::<f64>() / met.len() as f64;
    let exp_moment_lower = outcomes.iter().map(|o| (o.time() * scale).exp()).sum::<f64>() / outcomes.len() as f64;
    let survival = survival_curve(outcomes, times, level)?;
    let (x, y): (Vec<f64>, Vec<f64>) = survival
        .iter()
        .filter(|p| p.p_hat > 0.0 && p.p_hat < 1.0)
        .map(|p| (p.t, p.p_hat.ln()))
        .unzip();
    let tail_rate = if x.len() >= 3 {
        linear_fit(&x, &y).ok().map(|f| -f.slope)
    } else {
        None
    };
    Ok(TauStats {
        n: outcomes.len(),
        uncensored: met.len(),
        censored: outcomes.len() - met.len(),
        blowups: outcomes.iter().filter(|o| o.blowup).count(),
        mean: mean_ci(&met, level)?.into(),
        survival,
        lambda,
        f_d0: table.eval(d0, Which::F)?,
        exp_moment,
        exp_moment_lower,
        tail_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// `c` in `P_k ~ C e^{-c k}`.
    pub rate: f64,
    pub log_prefactor: f64,
    /// Coefficient of determination of the log-linear fit.
    pub goodness: f64,
    pub points: usize,
}

/// Log-linear fit of `series[k-1]` against `k`. The first zero entry ends
/// the usable range.
pub fn fit_decay(series: &[f64]) -> CoreResult<DecayFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .take_while(|p| **p > 0.0)
        .enumerate()
        .map(|(i, p)| ((i + 1) as f64, p.ln()))
        .unzip();
    if x.len() < 3 {
        return Err(CoreError::DegenerateFit(format!(
            "{} positive points before the first zero, need 3",
            x.len()
        )));
    }
    let fit = linear_fit(&x, &y)?;
    Ok(DecayFit {
        rate: -fit.slope + 0.0,
        log_prefactor: fit.intercept,
        goodness: fit.r2,
        points: x.len(),
    })
}
