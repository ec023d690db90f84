//! Lyapunov functions of the distance `r = |X1 - X2|` for the coupled
//! dynamics.
//!
//! For a drift satisfying the one-sided bound
//! `<A d + b(x) - b(y), d> <= lambda |d|^2 - a |d|^4` the function
//!
//! ```text
//! f(r) = 1/2 int_0^r e^{psi(s)} int_s^inf e^{-psi(sigma)} dsigma ds,
//! psi(s) = (a s^4 - 2 lambda s^2) / 8
//! ```
//!
//! solves `2 f'' + f' (lambda r - a r^3) = -1` with `f(0) = 0`, and is
//! bounded with a decreasing positive derivative. For the cut-off Burgers
//! drift the bound is `-(pi^2/4) |d|^2 + c_R |d|` and the analogous solution
//! is
//!
//! ```text
//! f_R(r) = 1/2 int_0^r e^{a s^2 - c s} int_s^inf e^{-a xi^2 + c xi} dxi ds,
//! a = pi^2/16, c = c_R / 2.
//! ```
//!
//! `f_R` grows like `exp(c^2 / 4a)`, so its table is kept in the log domain.
//!
//! Inner integrals are computed with a log shift that puts the integrand's
//! maximum at 1 and truncated where it falls below `e^-37` (about `1e-16`).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre5, gauss_legendre5_composite, integrate};
use crate::spline::CubicSpline;

/// `ln(1e16)` rounded up: truncation depth for inner integrals.
const TRUNCATION_LOG: f64 = 37.0;
/// Step of the central difference used by [`ode_residual`].
pub const RESIDUAL_STEP: f64 = 1e-4;
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
pub const DEFAULT_KNOTS: usize = 2000;
/// Above this change of `ln f_R'` across one knot interval the interval mass
/// is taken in closed form.
const STEEP_PANELS: f64 = 256.0;
/// Gauss-Legendre panels for the tail `[r_max, 10 r_max]` of `f_infinity`.
const TAIL_PANELS: usize = 2000;
pub const DEFAULT_GAMMA_INTERP: f64 = 4.0 / 7.0;

/// Constants `(lambda, a)` of the one-sided dissipativity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdConstants {
    pub lambda: f64,
    pub a: f64,
}

impl RdConstants {
    pub fn new(lambda: f64, a: f64) -> Result<Self> {
        if !(a > 0.0) || !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need a > 0 and lambda >= 0, got a = {a}, lambda = {lambda}"
            )));
        }
        Ok(Self { lambda, a })
    }
}

/// Dissipativity constants for `b(x) = -alpha x^3 + beta x^2 + gamma x + delta`
/// with the continuum Poincare constant `pi^2`.
///
/// Derivation: `p'(s) = -3 alpha s^2 + 2 beta s + gamma <= -2 alpha s^2 +
/// beta^2/alpha + gamma`, and `int_0^1 (y + t(x - y))^2 dt >= (x - y)^2 / 12`,
/// so pointwise `(p(x) - p(y))(x - y) <= -(alpha/6)(x - y)^4 +
/// (beta^2/alpha + gamma)(x - y)^2`. Integrating in space, using
/// `|d|_4^4 >= |d|_2^4` on the unit interval and `<A d, d> <= -pi^2 |d|^2`
/// gives `a = alpha / 6`, `lambda = max(0, beta^2/alpha + gamma - pi^2)`.
/// The constant `delta` cancels. A higher odd-degree polynomial would enter
/// through the same mean-value bound on `p'`.
pub fn dissipativity_constants(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<RdConstants> {
    dissipativity_constants_with_poincare(alpha, beta, gamma, delta, PI * PI)
}

/// As [`dissipativity_constants`] with an explicit Poincare constant, e.g.
/// the first eigenvalue of the discrete Laplacian.
pub fn dissipativity_constants_with_poincare(
    alpha: f64,
    beta: f64,
    gamma: f64,
    _delta: f64,
    poincare: f64,
) -> Result<RdConstants> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be > 0, got {alpha}")));
    }
    RdConstants::new((beta * beta / alpha + gamma - poincare).max(0.0), alpha / 6.0)
}

/// Drift-bound constant `c_R` for the cut-off Burgers drift.
///
/// Chain: `|F_R(x) - F_R(y)| <= c^g (2R)^{2-g} |d|^{3g/4} ||d||^{g/4}` with
/// `g = gamma_interp`, `c = c_sob`. Young's inequality with exponents
/// `2/(1+beta)`, `2/(1-beta)` (`beta = g/4`) absorbs `1/2 ||d||^2` and leaves
/// `K |d|^p` with `p = 2 alpha/(1 - beta) = 6g/(4 - g)` in `[1, 2)`. For
/// `p > 1` the excess over `(pi^2/4)|d|^2` is bounded by `c_R |d|` with
/// `c_R = max_r (K r^{p-1} - (pi^2/4) r)`; for `p = 1`, `c_R = K`.
pub fn cutoff_drift_constant(r: f64, gamma_interp: f64, c_sob: f64) -> Result<f64> {
    if !(r > 0.0) || !(c_sob > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need R > 0 and c_sob > 0, got R = {r}, c_sob = {c_sob}"
        )));
    }
    if !(4.0 / 7.0..1.0).contains(&gamma_interp) {
        return Err(Error::InvalidParameter(format!(
            "gamma_interp must lie in [4/7, 1), got {gamma_interp}"
        )));
    }
    let g = gamma_interp;
    let beta = g / 4.0;
    let lip = c_sob.powf(g) * (2.0 * r).powf(2.0 - g);
    let k = (1.0 - beta) / 2.0 * (1.0 + beta).powf((1.0 + beta) / (1.0 - beta)) * lip.powf(2.0 / (1.0 - beta));
    let q = 6.0 * g / (4.0 - g) - 1.0;
    if q <= 1e-14 {
        return Ok(k);
    }
    let quarter_pi2 = PI * PI / 4.0;
    let r_star = (k * q / quarter_pi2).powf(1.0 / (1.0 - q));
    Ok(r_star * quarter_pi2 * (1.0 - q) / q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LyapunovKind {
    ReactionDiffusion(RdConstants),
    /// `a = pi^2/16`; `c_r` is the drift-bound constant, `c_ode = c_r / 2`
    /// the coefficient appearing in `f_R`.
    BurgersCutoff {
        a: f64,
        c_r: f64,
        c_ode: f64,
        radius: f64,
        gamma_interp: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    F,
    FPrime,
}

#[derive(Debug, Clone)]
enum Columns {
    Linear {
        f: CubicSpline,
        fprime: CubicSpline,
    },
    /// `ln(f(r)/r)` (equal to `ln f'(0)` at `r = 0`) and `ln f'(r)`.
    Log {
        ln_f_over_r: CubicSpline,
        ln_fprime: CubicSpline,
    },
}

/// Tabulated Lyapunov function on uniform knots `0, h, ..., r_max`.
#[derive(Debug, Clone)]
pub struct LyapunovTable {
    kind: LyapunovKind,
    r_max: f64,
    h: f64,
    columns: Columns,
    bound: Option<f64>,
    f_infinity: Option<f64>,
}

impl LyapunovTable {
    pub fn kind(&self) -> &LyapunovKind {
        &self.kind
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn knots(&self) -> Vec<f64> {
        let n = match &self.columns {
            Columns::Linear { f, .. } => f.knots(),
            Columns::Log { ln_fprime, .. } => ln_fprime.knots(),
        };
        (0..n).map(|j| j as f64 * self.h).collect()
    }

    /// `Lambda = max(f(inf), f'(0))`, bounding both `f` and `f'` (RD kind).
    pub fn lambda_bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn f_infinity(&self) -> Option<f64> {
        self.f_infinity
    }

    pub fn is_log_domain(&self) -> bool {
        matches!(self.columns, Columns::Log { .. })
    }

    fn check_range(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || r > self.r_max * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { r, r_max: self.r_max });
        }
        Ok(())
    }

    /// Interpolated value; exact at knots.
    pub fn eval(&self, r: f64, which: Which) -> Result<f64> {
        self.check_range(r)?;
        match &self.columns {
            Columns::Linear { f, fprime } => Ok(match which {
                Which::F => f.value(r),
                Which::FPrime => fprime.value(r),
            }),
            Columns::Log { .. } => {
                if which == Which::F && r == 0.0 {
                    return Ok(0.0);
                }
                let ln = self.eval_ln(r, which)?;
                let v = ln.exp();
                if !v.is_finite() {
                    return Err(Error::Overflow(ln));
                }
                Ok(v)
            }
        }
    }

    /// Natural log of the interpolated value; `-inf` for `f(0)`.
    pub fn eval_ln(&self, r: f64, which: Which) -> Result<f64> {
        self.check_range(r)?;
        match &self.columns {
            Columns::Linear { .. } => Ok(self.eval(r, which)?.ln()),
            Columns::Log { ln_f_over_r, ln_fprime } => Ok(match which {
                Which::F if r == 0.0 => f64::NEG_INFINITY,
                Which::F => ln_f_over_r.value(r) + r.ln(),
                Which::FPrime => ln_fprime.value(r),
            }),
        }
    }

    /// Rows `(r, f, f')` at the knots (linear tables only).
    pub fn rows(&self) -> Option<Vec<(f64, f64, f64)>> {
        match &self.columns {
            Columns::Linear { f, fprime } => Some(
                self.knots()
                    .into_iter()
                    .zip(f.knot_values().iter().zip(fprime.knot_values()))
                    .map(|(r, (a, b))| (r, *a, *b))
                    .collect(),
            ),
            Columns::Log { .. } => None,
        }
    }

    /// Rows `(r, ln f, ln f')` at the knots.
    pub fn log_rows(&self) -> Vec<(f64, f64, f64)> {
        self.knots()
            .into_iter()
            .map(|r| {
                (
                    r,
                    self.eval_ln(r, Which::F).unwrap_or(f64::NEG_INFINITY),
                    self.eval_ln(r, Which::FPrime).unwrap_or(f64::NAN),
                )
            })
            .collect()
    }

    /// Copy with the `f'` column multiplied by `factor`, for sensitivity checks.
    pub fn with_fprime_scaled(&self, factor: f64) -> LyapunovTable {
        let mut out = self.clone();
        let h = self.h;
        let n = self.knots().len();
        let end = (n - 1) as f64 * h;
        out.columns = match &self.columns {
            Columns::Linear { f, fprime } => {
                let y: Vec<f64> = fprime.knot_values().iter().map(|v| v * factor).collect();
                Columns::Linear {
                    f: f.clone(),
                    fprime: CubicSpline::clamped(
                        0.0,
                        h,
                        y,
                        factor * fprime.derivative(0.0),
                        factor * fprime.derivative(end),
                    ),
                }
            }
            Columns::Log { ln_f_over_r, ln_fprime } => {
                let y: Vec<f64> = ln_fprime.knot_values().iter().map(|v| v + factor.ln()).collect();
                Columns::Log {
                    ln_f_over_r: ln_f_over_r.clone(),
                    ln_fprime: CubicSpline::clamped(0.0, h, y, ln_fprime.derivative(0.0), ln_fprime.derivative(end)),
                }
            }
        };
        out
    }
}

/// `ln f'(r)` for the RD kind by direct quadrature.
pub fn rd_ln_fprime(c: &RdConstants, r: f64, quad_tol: f64) -> Result<f64> {
    let r0 = (c.lambda / c.a).sqrt();
    let peak = r.max(r0);
    // psi(s) - psi(p) in factored form; the plain difference loses all
    // relative accuracy once psi is large
    let drop = |s: f64| (s - peak) * (s + peak) * (c.a * (s * s + peak * peak) - 2.0 * c.lambda) / 8.0;
    // smallest width (up to a factor 2) past which the integrand is below e^-37
    let mut w = 1.0;
    while drop(peak + w) > 2.0 * TRUNCATION_LOG {
        w *= 0.5;
    }
    while drop(peak + w) < TRUNCATION_LOG {
        w *= 2.0;
    }
    let integrand = |s: f64| (-drop(s)).exp();
    let mut total = integrate(integrand, peak, peak + w, quad_tol)?;
    if r < peak {
        total += integrate(integrand, r, peak, quad_tol)?;
    }
    Ok(0.5f64.ln() + drop(r) + total.ln())
}

/// `ln f_R'(r) = ln(1/2 int_0^inf e^{(c - 2 a r) u - a u^2} du)` by quadrature.
pub fn cutoff_ln_fprime(a: f64, c: f64, r: f64, quad_tol: f64) -> Result<f64> {
    let b = c - 2.0 * a * r;
    let (peak_log, total) = if b > 0.0 {
        let u_star = b / (2.0 * a);
        let w = (TRUNCATION_LOG / a).sqrt();
        let lo = (u_star - w).max(0.0);
        let integrand = |u: f64| (-a * (u - u_star) * (u - u_star)).exp();
        let mut total = integrate(integrand, lo, u_star, quad_tol)?;
        total += integrate(integrand, u_star, u_star + w, quad_tol)?;
        (b * b / (4.0 * a), total)
    } else {
        let upper = (b + (b * b + 4.0 * a * TRUNCATION_LOG).sqrt()) / (2.0 * a);
        let total = integrate(|u: f64| (b * u - a * u * u).exp(), 0.0, upper, quad_tol)?;
        (0.0, total)
    };
    Ok(0.5f64.ln() + peak_log + total.ln())
}

fn knot_spacing(r_max: f64, knots: usize) -> Result<f64> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::InvalidParameter(format!("r_max must be > 0, got {r_max}")));
    }
    if knots < 2 {
        return Err(Error::InvalidParameter("need at least 2 knot intervals".into()));
    }
    Ok(r_max / knots as f64)
}

/// Tabulates `f` and `f'` for the RD kind with `DEFAULT_KNOTS` intervals.
pub fn build_f(consts: RdConstants, r_max: f64, quad_tol: f64) -> Result<LyapunovTable> {
    build_f_with_knots(consts, r_max, quad_tol, DEFAULT_KNOTS)
}

pub fn build_f_with_knots(consts: RdConstants, r_max: f64, quad_tol: f64, knots: usize) -> Result<LyapunovTable> {
    let consts = RdConstants::new(consts.lambda, consts.a)?;
    let h = knot_spacing(r_max, knots)?;
    let fp = |s: f64| rd_ln_fprime(&consts, s, quad_tol).map(f64::exp);

    let mut fprime = Vec::with_capacity(knots + 1);
    let mut f = Vec::with_capacity(knots + 1);
    let mut acc = 0.0;
    for j in 0..=knots {
        let r = j as f64 * h;
        if j > 0 {
            let r_prev = (j - 1) as f64 * h;
            acc += gauss_legendre5(fp, r_prev, r)?;
        }
        f.push(acc);
        fprime.push(fp(r)?);
    }

    let (a, lambda) = (consts.a, consts.lambda);
    let fp_end = fprime[knots];
    let end = knots as f64 * h;
    let fpp_end = 0.5 * (fp_end * (a * end.powi(3) - lambda * end) - 1.0);

    // tail: quadrature out to 10 r_max, then the bound f' < 1/(a s^3 - lambda s)
    let far = 10.0 * r_max;
    let mut tail = gauss_legendre5_composite(fp, end, far, TAIL_PANELS)?;
    let s2 = a * far * far;
    tail += if lambda > 0.0 {
        (s2 / (s2 - lambda)).ln() / (2.0 * lambda)
    } else {
        1.0 / (2.0 * s2)
    };
    let f_inf = acc + tail;
    let bound = f_inf.max(fprime[0]);

    let f_spline = CubicSpline::clamped(0.0, h, f, fprime[0], fp_end);
    let fp_spline = CubicSpline::clamped(0.0, h, fprime, -0.5, fpp_end);
    Ok(LyapunovTable {
        kind: LyapunovKind::ReactionDiffusion(consts),
        r_max: end,
        h,
        columns: Columns::Linear {
            f: f_spline,
            fprime: fp_spline,
        },
        bound: Some(bound),
        f_infinity: Some(f_inf),
    })
}

/// Tabulates `f_R` in the log domain with `DEFAULT_KNOTS` intervals.
pub fn build_f_r(radius: f64, gamma_interp: f64, c_sob: f64, r_max: f64, quad_tol: f64) -> Result<LyapunovTable> {
    build_f_r_with_knots(radius, gamma_interp, c_sob, r_max, quad_tol, DEFAULT_KNOTS)
}

pub fn build_f_r_with_knots(
    radius: f64,
    gamma_interp: f64,
    c_sob: f64,
    r_max: f64,
    quad_tol: f64,
    knots: usize,
) -> Result<LyapunovTable> {
    let c_r = cutoff_drift_constant(radius, gamma_interp, c_sob)?;
    let h = knot_spacing(r_max, knots)?;
    let a = PI * PI / 16.0;
    let c = 0.5 * c_r;
    let ln_fp = |s: f64| cutoff_ln_fprime(a, c, s, quad_tol);

    let mut ln_fprime = Vec::with_capacity(knots + 1);
    for j in 0..=knots {
        ln_fprime.push(ln_fp(j as f64 * h)?);
    }
    // f' is decreasing, so ln f'(0) is the largest exponent
    let top = ln_fprime[0];
    let shifted = |s: f64| ln_fp(s).map(|v| (v - top).exp());
    let dlnfp = |r: f64, lnfp: f64| (2.0 * a * r - c) - 0.5 * (-lnfp).exp();
    let mut ln_f_over_r = Vec::with_capacity(knots + 1);
    ln_f_over_r.push(top);
    let mut acc = 0.0;
    for j in 1..=knots {
        let r = j as f64 * h;
        let (v0, v1) = (ln_fprime[j - 1], ln_fprime[j]);
        let change = (v1 - v0).abs();
        acc += if change <= 1.0 {
            gauss_legendre5(shifted, r - h, r)?
        } else if change <= STEEP_PANELS {
            gauss_legendre5_composite(shifted, r - h, r, change.ceil() as usize)?
        } else {
            // slope dominates curvature: integrate the exponential from the larger end
            let (v, slope) = if v0 >= v1 {
                (v0, dlnfp(r - h, v0))
            } else {
                (v1, dlnfp(r, v1))
            };
            (v - top).exp() * -(-change).exp_m1() / slope.abs()
        };
        ln_f_over_r.push(top + acc.ln() - r.ln());
    }
    if ln_fprime.iter().chain(&ln_f_over_r).any(|v| !v.is_finite()) {
        return Err(Error::Overflow(top));
    }

    let end = knots as f64 * h;
    let slope0 = dlnfp(0.0, top);
    let slope_end = dlnfp(end, ln_fprime[knots]);
    let ln_f_end = ln_f_over_r[knots] + end.ln();
    let fo_slope0 = 0.5 * (-c - 0.5 * (-top).exp());
    let fo_slope_end = (ln_fprime[knots] - ln_f_end).exp() - 1.0 / end;

    Ok(LyapunovTable {
        kind: LyapunovKind::BurgersCutoff {
            a,
            c_r,
            c_ode: c,
            radius,
            gamma_interp,
        },
        r_max: end,
        h,
        columns: Columns::Log {
            ln_f_over_r: CubicSpline::clamped(0.0, h, ln_f_over_r, fo_slope0, fo_slope_end),
            ln_fprime: CubicSpline::clamped(0.0, h, ln_fprime, slope0, slope_end),
        },
        bound: None,
        f_infinity: None,
    })
}

/// ODE residual at `r` using a central difference of the tabulated `f'`.
///
/// RD kind: `g' - g (a r^3 - lambda r)/2 + 1/2` with `g = f'`. Cut-off kind:
/// the residual of `g' - g (2 a r - c) + 1/2` divided by `g`, evaluated in the
/// log domain.
pub fn ode_residual(table: &LyapunovTable, r: f64) -> Result<f64> {
    let h = RESIDUAL_STEP;
    if r - h < 0.0 || r + h > table.r_max {
        return Err(Error::OutOfRange { r, r_max: table.r_max });
    }
    match *table.kind() {
        LyapunovKind::ReactionDiffusion(c) => {
            let g = table.eval(r, Which::FPrime)?;
            let dg = (table.eval(r + h, Which::FPrime)? - table.eval(r - h, Which::FPrime)?) / (2.0 * h);
            Ok(dg - 0.5 * g * (c.a * r.powi(3) - c.lambda * r) + 0.5)
        }
        LyapunovKind::BurgersCutoff { a, c_ode, .. } => {
            let ln_g = table.eval_ln(r, Which::FPrime)?;
            let dln = (table.eval_ln(r + h, Which::FPrime)? - table.eval_ln(r - h, Which::FPrime)?) / (2.0 * h);
            Ok(dln - (2.0 * a * r - c_ode) + 0.5 * (-ln_g).exp())
        }
    }
}

/// `2 f''(r) + f'(r) (lambda r - a r^3)` for the RD kind, `f''` from the
/// spline of `f'`. Equals `-1` for an exact solution.
pub fn generator_bound(table: &LyapunovTable, r: f64) -> Result<f64> {
    let LyapunovKind::ReactionDiffusion(c) = *table.kind() else {
        return Err(Error::InvalidParameter("generator bound needs an RD table".into()));
    };
    table.check_range(r)?;
    let Columns::Linear { fprime, .. } = &table.columns else {
        unreachable!("RD tables are linear");
    };
    Ok(2.0 * fprime.derivative(r) + fprime.value(r) * (c.lambda * r - c.a * r.powi(3)))
}

/// Second derivative `f''(r)` from the spline of `f'` (RD kind).
pub fn second_derivative(table: &LyapunovTable, r: f64) -> Result<f64> {
    table.check_range(r)?;
    match &table.columns {
        Columns::Linear { fprime, .. } => Ok(fprime.derivative(r)),
        Columns::Log { .. } => Err(Error::InvalidParameter("second derivative needs a linear table".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dissipativity_examples() {
        let c = dissipativity_constants(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(c.a, 1.0 / 6.0);
        assert_eq!(c.lambda, 0.0);
        let c = dissipativity_constants(1.0, 0.0, 12.0, 0.0).unwrap();
        assert!((c.lambda - (12.0 - PI * PI)).abs() < 1e-12);
        assert!((c.lambda - 2.1304).abs() < 1e-4);
        let c = dissipativity_constants(6.0, 0.0, PI * PI, 0.0).unwrap();
        assert_eq!(c.a, 1.0);
        assert_eq!(c.lambda, 0.0);
        assert!(dissipativity_constants(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(dissipativity_constants(-1.0, 0.0, 0.0, 0.0).is_err());
    }

    fn small_rd() -> LyapunovTable {
        build_f_with_knots(RdConstants::new(0.0, 1.0 / 6.0).unwrap(), 12.0, 1e-10, 600).unwrap()
    }

    #[test]
    fn f_vanishes_at_zero_and_second_derivative_is_minus_half() {
        let t = small_rd();
        assert_eq!(t.eval(0.0, Which::F).unwrap(), 0.0);
        assert!((second_derivative(&t, 0.0).unwrap() + 0.5).abs() < 1e-12);
        let g0 = (t.eval(RESIDUAL_STEP, Which::FPrime).unwrap() - t.eval(0.0, Which::FPrime).unwrap()) / RESIDUAL_STEP;
        assert!((g0 + 0.5).abs() < 1e-3);
    }

    #[test]
    fn fprime_at_zero_matches_gamma_identity() {
        // a = 8, lambda = 0: f'(0) = 1/2 int_0^inf e^{-s^4} ds = Gamma(5/4)/2
        let c = RdConstants::new(0.0, 8.0).unwrap();
        let v = rd_ln_fprime(&c, 0.0, 1e-12).unwrap().exp();
        let want = 0.5 * statrs::function::gamma::gamma(1.25);
        assert!((v - want).abs() < 1e-10, "{v} vs {want}");
        assert!((v - 0.4532).abs() < 1e-4);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let t = small_rd();
        assert!(matches!(t.eval(-0.1, Which::F), Err(Error::OutOfRange { .. })));
        assert!(matches!(t.eval(12.5, Which::F), Err(Error::OutOfRange { .. })));
        assert!(build_f(RdConstants { lambda: 0.0, a: 1.0 }, 0.0, 1e-10).is_err());
    }

    #[test]
    fn exact_at_knots() {
        let t = small_rd();
        let rows = t.rows().unwrap();
        for &(r, f, fp) in rows.iter().step_by(37) {
            assert_eq!(t.eval(r, Which::F).unwrap(), f);
            assert_eq!(t.eval(r, Which::FPrime).unwrap(), fp);
        }
    }

    #[test]
    fn perturbed_table_fails_the_residual() {
        let t = small_rd();
        let bad = t.with_fprime_scaled(1.01);
        let worst = (1..100)
            .map(|i| ode_residual(&bad, 0.1 * i as f64).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "worst residual {worst}");
    }

    #[test]
    fn cutoff_constant_examples() {
        // gamma = 4/7 makes p = 1, so c_R = K
        let g = DEFAULT_GAMMA_INTERP;
        let p = 2.0 * (3.0 * g / 4.0) / (1.0 - g / 4.0);
        assert!((p - 1.0).abs() < 1e-14);
        let c1 = cutoff_drift_constant(1.0, g, 1.0).unwrap();
        let k = (3.0 / 7.0) * (8.0f64 / 7.0).powf(4.0 / 3.0) * 2f64.powf(10.0 / 7.0).powf(7.0 / 3.0);
        assert!((c1 - k).abs() < 1e-12 * k);
        assert!(cutoff_drift_constant(1.0, 1.0, 1.0).is_err());
        assert!(cutoff_drift_constant(1.0, 0.5, 1.0).is_err());
        assert!(cutoff_drift_constant(0.0, g, 1.0).is_err());
    }

    #[test]
    fn cutoff_constant_absorbs_the_power_for_p_above_one() {
        let (r, g) = (2.0, 0.8);
        let c = cutoff_drift_constant(r, g, 1.0).unwrap();
        let beta = g / 4.0;
        let lip = (2.0 * r).powf(2.0 - g);
        let k = (1.0 - beta) / 2.0 * (1.0 + beta).powf((1.0 + beta) / (1.0 - beta)) * lip.powf(2.0 / (1.0 - beta));
        let p = 6.0 * g / (4.0 - g);
        for i in 1..2000 {
            let d = 1e-3 * i as f64 * 50.0;
            assert!(k * d.powf(p) <= PI * PI / 4.0 * d * d + c * d * (1.0 + 1e-12));
        }
    }

    /// `ln(1/2 int_0^inf e^{bu - au^2} du)` via the complementary error function.
    fn closed_form_ln_fprime(a: f64, c: f64, r: f64) -> f64 {
        let b = c - 2.0 * a * r;
        let x = -b / (2.0 * a.sqrt());
        0.5f64.ln() + 0.5 * (PI / (4.0 * a)).ln() + b * b / (4.0 * a) + statrs::function::erf::erfc(x).ln()
    }

    #[test]
    fn cutoff_fprime_matches_erfc_closed_form() {
        let a = PI * PI / 16.0;
        for c in [0.5, 3.0, 20.0] {
            for r in [0.0, 0.3, 1.0, 2.5, 4.0] {
                let q = cutoff_ln_fprime(a, c, r, 1e-12).unwrap();
                let want = closed_form_ln_fprime(a, c, r);
                assert!(
                    (q - want).abs() < 1e-9 * want.abs().max(1.0),
                    "c={c} r={r}: {q} vs {want}"
                );
            }
        }
    }

    #[test]
    fn cutoff_table_finite_and_increasing_up_to_radius_fifty() {
        for radius in [0.5, 1.0, 5.0, 10.0, 25.0, 50.0] {
            for r_max in [0.6, 12.0] {
                let t = build_f_r_with_knots(radius, DEFAULT_GAMMA_INTERP, 1.0, r_max, DEFAULT_QUAD_TOL, 200).unwrap();
                let rows = t.log_rows();
                assert_eq!(rows[0].1, f64::NEG_INFINITY);
                assert!(
                    rows[1..].iter().all(|(_, f, fp)| f.is_finite() && fp.is_finite()),
                    "R = {radius}"
                );
                assert!(
                    rows.windows(2)
                        .all(|w| w[1].1 >= w[0].1 - 4.0 * f64::EPSILON * w[0].1.abs()),
                    "R = {radius}"
                );
            }
        }
    }

    #[test]
    fn steep_cutoff_mass_matches_laplace_limit() {
        // for large c, f_R(r) -> int_0^inf f_R' ~ f_R'(0) / c for r >> 1/c
        let t = build_f_r_with_knots(50.0, DEFAULT_GAMMA_INTERP, 1.0, 1.0, DEFAULT_QUAD_TOL, 100).unwrap();
        let LyapunovKind::BurgersCutoff { c_ode, .. } = *t.kind() else {
            unreachable!()
        };
        let want = t.eval_ln(0.0, Which::FPrime).unwrap() - c_ode.ln();
        let got = t.eval_ln(0.5, Which::F).unwrap();
        assert!((got - want).abs() < 1e-6 * want.abs(), "{got} vs {want}");
    }
}
