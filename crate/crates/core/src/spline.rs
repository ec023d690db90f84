//! Clamped cubic spline on uniform knots.

use crate::tridiag::thomas_solve;

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x0: f64,
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Spline through `y` at `x0 + j h` with end slopes `slope0`, `slope_n`.
    pub fn clamped(x0: f64, h: f64, y: Vec<f64>, slope0: f64, slope_n: f64) -> Self {
        let n = y.len();
        assert!(n >= 2, "spline needs at least two knots");
        let mut sub = vec![1.0; n];
        let mut diag = vec![4.0; n];
        let mut sup = vec![1.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0;
        diag[n - 1] = 2.0;
        sub[0] = 0.0;
        sup[n - 1] = 0.0;
        rhs[0] = 6.0 / h * ((y[1] - y[0]) / h - slope0);
        rhs[n - 1] = 6.0 / h * (slope_n - (y[n - 1] - y[n - 2]) / h);
        for i in 1..n - 1 {
            rhs[i] = 6.0 / (h * h) * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
        }
        let m = thomas_solve(&sub, &diag, &sup, &rhs);
        Self { x0, h, y, m }
    }

    pub fn knots(&self) -> usize {
        self.y.len()
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.y
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.y.len();
        let s = (x - self.x0) / self.h;
        let j = (s.floor().max(0.0) as usize).min(n - 2);
        (j, x - (self.x0 + j as f64 * self.h))
    }

    /// Snaps arguments within `1e-9` knot spacings of a knot to that knot so
    /// tabulated values are returned exactly.
    fn knot_index(&self, x: f64) -> Option<usize> {
        let s = (x - self.x0) / self.h;
        let r = s.round();
        ((s - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.y.len()).then_some(r as usize)
    }

    pub fn value(&self, x: f64) -> f64 {
        if let Some(i) = self.knot_index(x) {
            return self.y[i];
        }
        let (j, t) = self.locate(x);
        let h = self.h;
        let (mj, mk) = (self.m[j], self.m[j + 1]);
        let b = (self.y[j + 1] - self.y[j]) / h - h * (2.0 * mj + mk) / 6.0;
        self.y[j] + t * (b + t * (0.5 * mj + t * (mk - mj) / (6.0 * h)))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (j, t) = self.locate(x);
        let h = self.h;
        let (mj, mk) = (self.m[j], self.m[j + 1]);
        let b = (self.y[j + 1] - self.y[j]) / h - h * (2.0 * mj + mk) / 6.0;
        b + t * (mj + t * (mk - mj) / (2.0 * h))
    }
}
