//! Time steppers for `dX = (A X + b(X)) dt + dW` on `(0, 1)` with Dirichlet
//! boundary conditions, `A` the Laplacian.
//!
//! The scheme is linear-implicit Euler: implicit in the 3-point Laplacian
//! `A_h`, explicit in the drift `b`,
//!
//! ```text
//! (I - dt A_h) u+ = u + dt b(u) + dW
//! ```
//!
//! solved by a pre-factored tridiagonal sweep. The Burgers drift
//! `d/dxi (u^2)` uses central differences with zero ghost values so the
//! discrete pairing `<b(u), u^3>` vanishes to second order in `dx`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid_noise::{Field, Grid, NoiseStream};
use crate::tridiag::TridiagFactor;

/// The drift `b` of the equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSpec {
    Zero,
    /// `b(x) = -alpha x^3 + beta x^2 + gamma x + delta`, `alpha > 0`.
    ReactionDiffusion {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
    },
    /// `b(x) = d/dxi (x^2)`.
    Burgers,
    /// `b(x) = d/dxi F_R(x)` with the `L^4`-ball truncation of the square.
    CutoffBurgers {
        r: f64,
    },
}

impl DriftSpec {
    pub fn reaction_diffusion(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reaction-diffusion needs alpha > 0, got {alpha}"
            )));
        }
        Ok(Self::ReactionDiffusion {
            alpha,
            beta,
            gamma,
            delta,
        })
    }

    pub fn cutoff_burgers(r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("cut-off radius must be > 0, got {r}")));
        }
        Ok(Self::CutoffBurgers { r })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DriftSpec::ReactionDiffusion { alpha, .. } if !(alpha > 0.0) => Err(Error::InvalidParameter(format!(
                "reaction-diffusion needs alpha > 0, got {alpha}"
            ))),
            DriftSpec::CutoffBurgers { r } if !(r > 0.0) => {
                Err(Error::InvalidParameter(format!("cut-off radius must be > 0, got {r}")))
            }
            _ => Ok(()),
        }
    }
}

/// `(u_{i+1}^2 - u_{i-1}^2) / (2 dx)` with `u_0 = u_{n+1} = 0`, times `scale`.
fn burgers_stencil(u: &[f64], dx: f64, scale: f64, out: &mut [f64]) {
    let n = u.len();
    let c = scale / (2.0 * dx);
    for i in 0..n {
        let l = if i > 0 { u[i - 1] * u[i - 1] } else { 0.0 };
        let r = if i + 1 < n { u[i + 1] * u[i + 1] } else { 0.0 };
        out[i] = c * (r - l);
    }
}

/// Multiplier applied to `u^2` by the cut-off: 1 inside the `L^4` ball of
/// radius `r`, `r^2 / |u|_4^2` outside.
fn cutoff_factor(u: &Field, r: f64) -> f64 {
    let l4 = u.l4_norm();
    if l4 <= r {
        1.0
    } else {
        r * r / (l4 * l4)
    }
}

/// Writes `b(u)` into `out`.
pub fn drift_eval_into(spec: &DriftSpec, u: &Field, out: &mut [f64]) {
    let vals = u.values();
    match *spec {
        DriftSpec::Zero => out.iter_mut().for_each(|v| *v = 0.0),
        DriftSpec::ReactionDiffusion {
            alpha,
            beta,
            gamma,
            delta,
        } => {
            for (o, &x) in out.iter_mut().zip(vals) {
                *o = ((-alpha * x + beta) * x + gamma) * x + delta;
            }
        }
        DriftSpec::Burgers => burgers_stencil(vals, u.grid().dx(), 1.0, out),
        DriftSpec::CutoffBurgers { r } => burgers_stencil(vals, u.grid().dx(), cutoff_factor(u, r), out),
    }
}

pub fn drift_eval(spec: &DriftSpec, u: &Field) -> Field {
    let mut out = u.grid().zeros();
    drift_eval_into(spec, u, out.values_mut());
    out
}

/// `F_R(u)`: `u^2` if `|u|_4 <= r`, else `r^2 u^2 / |u|_4^2`.
pub fn cutoff_square(u: &Field, r: f64) -> Result<Field> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("cut-off radius must be > 0, got {r}")));
    }
    let s = cutoff_factor(u, r);
    let mut out = u.clone();
    out.values_mut().iter_mut().for_each(|v| *v = s * *v * *v);
    Ok(out)
}

/// `A_h u` with zero Dirichlet data.
pub fn apply_laplacian(u: &Field) -> Field {
    let v = u.values();
    let n = v.len();
    let h2 = u.grid().dx() * u.grid().dx();
    let mut out = u.grid().zeros();
    for i in 0..n {
        let l = if i > 0 { v[i - 1] } else { 0.0 };
        let r = if i + 1 < n { v[i + 1] } else { 0.0 };
        out[i] = (l - 2.0 * v[i] + r) / h2;
    }
    out
}

/// `<A_h (x - y) + b(x) - b(y), x - y>_2`, the paired drift increment.
pub fn paired_drift_pairing(spec: &DriftSpec, x: &Field, y: &Field) -> f64 {
    let d = x - y;
    let mut inc = apply_laplacian(&d);
    inc.axpy(1.0, &drift_eval(spec, x));
    inc.axpy(-1.0, &drift_eval(spec, y));
    inc.dot(&d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    SemiImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub blowup_guard: f64,
    pub scheme: Scheme,
}

impl SolverConfig {
    pub fn new(dt: f64, blowup_guard: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            blowup_guard,
            scheme: Scheme::SemiImplicit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.blowup_guard > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "blowup_guard must be > 0, got {}",
                self.blowup_guard
            )));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t]`, rounded to the nearest integer.
    pub fn steps_for(&self, t: f64) -> usize {
        (t / self.dt).round().max(0.0) as usize
    }
}

/// Semi-implicit stepper with the factorization of `I - dt A_h` cached.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Grid,
    cfg: SolverConfig,
    factor: TridiagFactor,
}

impl Stepper {
    pub fn new(grid: Grid, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.n_interior();
        let k = cfg.dt / (grid.dx() * grid.dx());
        let factor = TridiagFactor::new(&vec![-k; n], &vec![1.0 + 2.0 * k; n], &vec![-k; n]);
        Ok(Self { grid, cfg, factor })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }

    /// Advances `u` in place by one step. `scratch` must have length `n`.
    ///
    /// On blow-up `u` holds the offending post-step state.
    pub fn step_in_place(&self, u: &mut Field, spec: &DriftSpec, dw: &Field, scratch: &mut [f64]) -> Result<()> {
        drift_eval_into(spec, u, scratch);
        let dt = self.cfg.dt;
        for ((v, b), w) in u.values_mut().iter_mut().zip(scratch.iter()).zip(dw.values()) {
            *v += dt * b + w;
        }
        self.factor.solve_in_place(u.values_mut());
        self.check_guard(u)
    }

    /// Applies `(I - dt A_h)^{-1}` to `rhs` in place, then checks the guard.
    pub fn implicit_solve(&self, rhs: &mut Field) -> Result<()> {
        self.factor.solve_in_place(rhs.values_mut());
        self.check_guard(rhs)
    }

    fn check_guard(&self, u: &Field) -> Result<()> {
        let l4 = u.l4_norm();
        if !(l4 <= self.cfg.blowup_guard) {
            return Err(Error::BlowUp {
                norm: l4,
                guard: self.cfg.blowup_guard,
            });
        }
        Ok(())
    }

    pub fn step(&self, u: &Field, spec: &DriftSpec, dw: &Field) -> Result<Field> {
        let mut out = u.clone();
        let mut scratch = vec![0.0; u.len()];
        self.step_in_place(&mut out, spec, dw, &mut scratch)?;
        Ok(out)
    }

    /// Runs `steps` steps with fresh increments from `stream`.
    pub fn evolve(&self, u: &mut Field, spec: &DriftSpec, steps: usize, stream: &mut NoiseStream) -> Result<()> {
        let mut dw = self.grid.zeros();
        let mut scratch = vec![0.0; u.len()];
        for _ in 0..steps {
            stream.fill_white_increment(self.cfg.dt, &mut dw);
            self.step_in_place(u, spec, &dw, &mut scratch)?;
        }
        Ok(())
    }
}

pub fn step_semi_implicit(u: &Field, spec: &DriftSpec, cfg: &SolverConfig, dw: &Field) -> Result<Field> {
    if !(u.l4_norm() <= cfg.blowup_guard) {
        return Err(Error::BlowUp {
            norm: u.l4_norm(),
            guard: cfg.blowup_guard,
        });
    }
    Stepper::new(*u.grid(), *cfg)?.step(u, spec, dw)
}

/// Noiseless Burgers flow `X^0(t_end, x0)`.
pub fn solve_deterministic_burgers(x0: &Field, t_end: f64, cfg: &SolverConfig) -> Result<Field> {
    if !(t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {t_end}")));
    }
    let stepper = Stepper::new(*x0.grid(), *cfg)?;
    let zero = x0.grid().zeros();
    let mut u = x0.clone();
    let mut scratch = vec![0.0; u.len()];
    for _ in 0..cfg.steps_for(t_end) {
        stepper.step_in_place(&mut u, &DriftSpec::Burgers, &zero, &mut scratch)?;
    }
    Ok(u)
}

/// Coefficients `<u, e_k>_2` for `k = 1..=n` in the discrete sine basis.
pub fn sine_coefficients(u: &Field) -> Vec<f64> {
    let g = u.grid();
    (1..=g.n_interior()).map(|k| u.dot(&g.sine_mode(k))).collect()
}

/// Inverse of [`sine_coefficients`]; missing trailing coefficients are zero.
pub fn from_sine_coefficients(grid: &Grid, coeffs: &[f64]) -> Field {
    let mut out = grid.zeros();
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            out.axpy(c, &grid.sine_mode(k + 1));
        }
    }
    out
}

/// Eigenvalues used by the spectral OU sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eigenvalues {
    /// `pi^2 k^2`, the continuum Laplacian.
    Continuous,
    /// `(4/dx^2) sin^2(k pi dx / 2)`, the eigenvalues of `-A_h`.
    Discrete,
}

/// Exact sampler for the linear equation (`b = 0`), mode by mode in the
/// discrete sine basis.
#[derive(Debug, Clone)]
pub struct OuSpectralSampler {
    grid: Grid,
    modes: usize,
    lambdas: Vec<f64>,
}

impl OuSpectralSampler {
    pub fn new(grid: Grid, modes: usize, eigen: Eigenvalues) -> Result<Self> {
        if modes == 0 || modes > grid.n_interior() {
            return Err(Error::InvalidParameter(format!(
                "mode count must be in 1..={}, got {modes}",
                grid.n_interior()
            )));
        }
        let lambdas = (1..=modes)
            .map(|k| match eigen {
                Eigenvalues::Continuous => PI * PI * (k * k) as f64,
                Eigenvalues::Discrete => grid.eigenvalue(k),
            })
            .collect();
        Ok(Self { grid, modes, lambdas })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    /// `(1 - e^{-2 lambda_k t}) / (2 lambda_k)`.
    pub fn transition_variance(&self, k: usize, t: f64) -> f64 {
        let l = self.lambdas[k - 1];
        -(-2.0 * l * t).exp_m1() / (2.0 * l)
    }

    pub fn stationary_variance(&self, k: usize) -> f64 {
        1.0 / (2.0 * self.lambdas[k - 1])
    }

    /// Samples `X(t)` given `X(0) = x0`. Modes above `K` decay
    /// deterministically and receive no noise.
    pub fn sample(&self, x0: &Field, t: f64, stream: &mut NoiseStream) -> Result<Field> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("t must be >= 0, got {t}")));
        }
        let mut coeffs = sine_coefficients(x0);
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let k = idx + 1;
            let l = if k <= self.modes {
                self.lambdas[idx]
            } else {
                self.grid.eigenvalue(k)
            };
            *c *= (-l * t).exp();
            if k <= self.modes && t > 0.0 {
                *c += self.transition_variance(k, t).sqrt() * stream.standard_normal();
            }
        }
        Ok(from_sine_coefficients(&self.grid, &coeffs))
    }
}

pub fn sample_ou_exact(
    x0: &Field,
    t: f64,
    modes: usize,
    eigen: Eigenvalues,
    stream: &mut NoiseStream,
) -> Result<Field> {
    OuSpectralSampler::new(*x0.grid(), modes, eigen)?.sample(x0, t, stream)
}

/// Constant `c` in `|u|_4 <= c |u|_2^{3/4} ||u||^{1/4}` for the discrete norms.
///
/// `c = 1` holds exactly: summing `u_{j+1}^2 - u_j^2` from either boundary
/// and averaging gives `u_i^2 <= |u|_2 ||u||`, whence
/// `|u|_4^4 <= max u_i^2 |u|_2^2 <= |u|_2^3 ||u||`.
pub const INTERPOLATION_CONSTANT: f64 = 1.0;

/// Ratio `|u|_4 / (|u|_2^{3/4} ||u||^{1/4})`; zero for `u = 0`.
pub fn interpolation_ratio(u: &Field) -> f64 {
    let l2 = u.l2_norm();
    if l2 == 0.0 {
        return 0.0;
    }
    u.l4_norm() / (l2.powf(0.75) * u.h10_norm().powf(0.25))
}

/// Largest interpolation ratio seen over sine modes, localized bumps and
/// `samples` random fields.
pub fn estimate_interpolation_constant(grid: &Grid, samples: usize, stream: &mut NoiseStream) -> f64 {
    let mut best: f64 = 0.0;
    for k in 1..=grid.n_interior() {
        best = best.max(interpolation_ratio(&grid.sine_mode(k)));
    }
    for w in [0.5, 0.25, 0.1, 0.05, 0.02, 0.01] {
        for c in [0.5, 0.25, 0.1] {
            let bump = grid.from_fn(|x| (-(x - c) * (x - c) / (2.0 * w * w)).exp() * x * (1.0 - x));
            best = best.max(interpolation_ratio(&bump));
        }
    }
    let mut u = grid.zeros();
    for _ in 0..samples {
        stream.fill_white_increment(grid.dx(), &mut u);
        best = best.max(interpolation_ratio(&u));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_noise::make_grid;

    fn cfg(dt: f64) -> SolverConfig {
        SolverConfig::new(dt, 1e6).unwrap()
    }

    #[test]
    fn zero_and_polynomial_drifts() {
        let g = make_grid(9).unwrap();
        let u = g.from_fn(|x| x.sin());
        assert!(drift_eval(&DriftSpec::Zero, &u).values().iter().all(|v| *v == 0.0));
        let two = g.from_fn(|_| 2.0);
        let rd = DriftSpec::reaction_diffusion(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(drift_eval(&rd, &two).values().iter().all(|v| *v == -8.0));
        assert!(DriftSpec::reaction_diffusion(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(DriftSpec::cutoff_burgers(-1.0).is_err());
    }

    #[test]
    fn burgers_drift_of_constant_lives_at_the_boundary() {
        let g = make_grid(7).unwrap();
        let c = 1.5;
        let u = g.from_fn(|_| c);
        let b = drift_eval(&DriftSpec::Burgers, &u);
        let want = c * c / (2.0 * g.dx());
        assert!((b[0] - want).abs() < 1e-12);
        assert!((b[6] + want).abs() < 1e-12);
        for i in 1..6 {
            assert_eq!(b[i], 0.0);
        }
    }

    #[test]
    fn cutoff_below_and_above_threshold() {
        let g = make_grid(15).unwrap();
        let z = cutoff_square(&g.zeros(), 1.0).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));

        let one = g.from_fn(|_| 1.0);
        let f = cutoff_square(&one, 2.0).unwrap();
        assert!(f.values().iter().all(|v| *v == 1.0));

        let four = g.from_fn(|_| 4.0);
        let f = cutoff_square(&four, 2.0).unwrap();
        let l4sq = four.l4_norm().powi(2);
        for v in f.values() {
            assert!((v - 4.0 * 16.0 / l4sq).abs() < 1e-12);
        }
        // |u|_4^2 = 16 * sqrt(n dx) on the discrete grid
        assert!((l4sq - 16.0 * (15.0 * g.dx()).sqrt()).abs() < 1e-12);
        assert!(cutoff_square(&one, 0.0).is_err());
    }

    #[test]
    fn cutoff_drift_equals_burgers_inside_ball() {
        let g = make_grid(15).unwrap();
        let u = g.from_fn(|x| 0.3 * (3.0 * x).sin());
        let a = drift_eval(&DriftSpec::Burgers, &u);
        let b = drift_eval(&DriftSpec::CutoffBurgers { r: 10.0 }, &u);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = make_grid(8).unwrap();
        let z = g.zeros();
        let out = step_semi_implicit(&z, &DriftSpec::Zero, &cfg(1e-2), &z).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn first_mode_decays_by_resolvent_factor() {
        let g = make_grid(31).unwrap();
        let dt = 1e-3;
        let u = g.from_fn(|x| (PI * x).sin());
        let out = step_semi_implicit(&u, &DriftSpec::Zero, &cfg(dt), &g.zeros()).unwrap();
        let fac = 1.0 / (1.0 + dt * g.first_eigenvalue());
        for i in 0..31 {
            assert!((out[i] - u[i] * fac).abs() < 1e-13);
        }
    }

    /// Dense Gaussian elimination, independent of the tridiagonal sweep.
    #[allow(clippy::needless_range_loop)]
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn constant_forcing_matches_dense_solve() {
        let g = make_grid(12).unwrap();
        let dt = 5e-3;
        let delta = 0.7;
        let spec = DriftSpec::reaction_diffusion(1.0, 0.0, 0.0, delta).unwrap();
        let out = step_semi_implicit(&g.zeros(), &spec, &cfg(dt), &g.zeros()).unwrap();
        let n = 12;
        let k = dt / (g.dx() * g.dx());
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 1.0 + 2.0 * k;
            if i > 0 {
                a[i][i - 1] = -k;
            }
            if i + 1 < n {
                a[i][i + 1] = -k;
            }
        }
        let want = dense_solve(a, vec![dt * delta; n]);
        for i in 0..n {
            assert!((out[i] - want[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn blowup_is_an_error_not_a_clip() {
        let g = make_grid(8).unwrap();
        let cfg = SolverConfig::new(1e-3, 1.0).unwrap();
        let big = g.from_fn(|_| 10.0);
        assert!(matches!(
            step_semi_implicit(&big, &DriftSpec::Zero, &cfg, &g.zeros()),
            Err(Error::BlowUp { .. })
        ));
        let stepper = Stepper::new(g, cfg).unwrap();
        let small = g.from_fn(|_| 0.1);
        let kick = g.from_fn(|_| 50.0);
        assert!(matches!(
            stepper.step(&small, &DriftSpec::Zero, &kick),
            Err(Error::BlowUp { .. })
        ));
    }

    #[test]
    fn deterministic_burgers_from_zero_stays_zero() {
        let g = make_grid(31).unwrap();
        let out = solve_deterministic_burgers(&g.zeros(), 0.5, &cfg(1e-3)).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
        assert!(solve_deterministic_burgers(&g.zeros(), -1.0, &cfg(1e-3)).is_err());
    }

    #[test]
    fn sine_transform_round_trip() {
        let g = make_grid(10).unwrap();
        let u = g.from_fn(|x| x * (1.0 - x) * (5.0 * x).cos());
        let back = from_sine_coefficients(&g, &sine_coefficients(&u));
        assert!(back.max_abs_diff(&u) < 1e-13);
    }

    #[test]
    fn ou_at_time_zero_is_identity() {
        let g = make_grid(10).unwrap();
        let u = g.from_fn(|x| x * (1.0 - x));
        let mut s = NoiseStream::new(5, 0);
        let out = sample_ou_exact(&u, 0.0, 10, Eigenvalues::Discrete, &mut s).unwrap();
        assert!(out.max_abs_diff(&u) < 1e-13);
        assert!(sample_ou_exact(&u, 0.1, 11, Eigenvalues::Discrete, &mut s).is_err());
    }

    #[test]
    fn transition_variance_is_monotone() {
        let g = make_grid(10).unwrap();
        let s = OuSpectralSampler::new(g, 10, Eigenvalues::Continuous).unwrap();
        for k in 1..=10 {
            let mut prev = 0.0;
            for t in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
                let v = s.transition_variance(k, t);
                assert!(v >= prev);
                prev = v;
            }
            assert!((prev - s.stationary_variance(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_constant_is_an_upper_bound() {
        let g = make_grid(63).unwrap();
        let mut s = NoiseStream::new(11, 0);
        let c = estimate_interpolation_constant(&g, 500, &mut s);
        assert!(c > 0.5 && c <= INTERPOLATION_CONSTANT, "c = {c}");
    }
}
