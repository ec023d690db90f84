//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;
/// Coarse panels used to locate mass before adaptive refinement.
const PANELS: usize = 64;

struct Simpson<'a, F> {
    f: &'a F,
    tol_abs: f64,
    failed: bool,
}

impl<F: Fn(f64) -> f64> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = (self.f)(lm);
        let frm = (self.f)(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // the second bound stops refinement once delta is at rounding level
        let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if delta.abs() <= (15.0 * tol).max(noise) || (b - a) <= f64::EPSILON * a.abs().max(b.abs()) * 4.0 {
            return left + right + delta / 15.0;
        }
        if depth == 0 {
            self.failed = true;
            return left + right + delta / 15.0;
        }
        self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// The interval is first split into fixed panels whose composite Simpson sum
/// sets the absolute scale; each panel is then refined adaptively. Tolerance
/// is floored at `1e-300` absolute so an identically zero integrand succeeds.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate_panels(f, a, b, rel_tol, PANELS)
}

/// As [`integrate`] with an explicit number of coarse panels.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, panels: usize) -> Result<f64> {
    let panels = panels.max(1);
    if a == b {
        return Ok(0.0);
    }
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter(format!("bad interval [{a}, {b}]")));
    }
    let h = (b - a) / panels as f64;
    let xs: Vec<f64> = (0..=2 * panels).map(|i| a + 0.5 * h * i as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    if fs.iter().any(|v| !v.is_finite()) {
        return Err(Error::QuadratureFailure { a, b, tol: rel_tol });
    }
    let coarse: Vec<f64> = (0..panels)
        .map(|p| h / 6.0 * (fs[2 * p] + 4.0 * fs[2 * p + 1] + fs[2 * p + 2]))
        .collect();
    let scale = coarse.iter().map(|v| v.abs()).sum::<f64>();
    let tol_abs = (rel_tol * scale).max(1e-300);
    let mut s = Simpson {
        f: &f,
        tol_abs,
        failed: false,
    };
    let mut total = 0.0;
    for p in 0..panels {
        let tol = s.tol_abs / panels as f64;
        total += s.recurse(
            xs[2 * p],
            xs[2 * p + 2],
            fs[2 * p],
            fs[2 * p + 1],
            fs[2 * p + 2],
            coarse[p],
            tol,
            MAX_DEPTH,
        );
    }
    if s.failed || !total.is_finite() {
        return Err(Error::QuadratureFailure { a, b, tol: rel_tol });
    }
    Ok(total)
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Five-point Gauss-Legendre rule on `[a, b]` for a fallible integrand.
pub fn gauss_legendre5<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64) -> Result<f64> {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut sum = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
        sum += w * f(mid + half * x)?;
    }
    Ok(half * sum)
}

/// Composite five-point Gauss-Legendre rule over `panels` equal panels.
pub fn gauss_legendre5_composite<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64, panels: usize) -> Result<f64> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels).try_fold(0.0, |acc, p| {
        let lo = a + p as f64 * h;
        Ok(acc + gauss_legendre5(&f, lo, lo + h)?)
    })
}
