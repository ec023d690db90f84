//! Uniform Dirichlet grid on `[0, 1]`, discrete function-space norms and
//! reproducible space-time white-noise increments.
//!
//! Fields store interior node values only; the boundary values are
//! identically zero. Inner products and norms are the quadrature forms
//!
//! ```text
//! <u, v>_2 = dx * sum u_i v_i
//! |u|_4^4  = dx * sum u_i^4
//! ||u||^2  = sum_{i=0}^{n} (u_{i+1} - u_i)^2 / dx,   u_0 = u_{n+1} = 0
//! ```
//!
//! White noise is rendered in the normalized-indicator basis: each interior
//! entry of an increment over `dt` is an independent `Normal(0, dt/dx)`, so the
//! projection onto any discretely orthonormal direction is `Normal(0, dt)`.

use std::f64::consts::PI;
use std::ops::{Add, Index, IndexMut, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Uniform grid with `n_interior` interior nodes and spacing `1 / (n_interior + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n_interior: usize,
    dx: f64,
}

impl Grid {
    pub fn new(n_interior: usize) -> Result<Self> {
        if n_interior < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 interior nodes, got {n_interior}"
            )));
        }
        Ok(Self {
            n_interior,
            dx: 1.0 / (n_interior as f64 + 1.0),
        })
    }

    #[inline]
    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Abscissa of interior node `i` (0-based), i.e. `(i + 1) * dx`.
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.dx
    }

    /// Smallest eigenvalue of `-A_h`, the discrete Dirichlet Laplacian:
    /// `(4/dx^2) sin^2(pi dx / 2)`.
    pub fn first_eigenvalue(&self) -> f64 {
        self.eigenvalue(1)
    }

    /// `k`-th eigenvalue of `-A_h` (1-based).
    pub fn eigenvalue(&self, k: usize) -> f64 {
        let s = (k as f64 * PI * self.dx / 2.0).sin();
        4.0 / (self.dx * self.dx) * s * s
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: *self,
            values: vec![0.0; self.n_interior],
        }
    }

    pub fn from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: *self,
            values: (0..self.n_interior).map(|i| f(self.node(i))).collect(),
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<Field> {
        Field::new(*self, values)
    }

    /// `k`-th discretely orthonormal sine mode `sqrt(2) sin(k pi xi)` (1-based).
    pub fn sine_mode(&self, k: usize) -> Field {
        let s = 2f64.sqrt();
        self.from_fn(|x| s * (k as f64 * PI * x).sin())
    }
}

/// `make_grid` from the operation list; same as [`Grid::new`].
pub fn make_grid(n_interior: usize) -> Result<Grid> {
    Grid::new(n_interior)
}

/// Which discrete norm to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    L4,
    H10,
}

/// Interior values of a function on a [`Grid`] with homogeneous Dirichlet data.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_interior {
            return Err(Error::InvalidParameter(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.n_interior
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Discrete `L^2` inner product.
    pub fn dot(&self, other: &Field) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.grid.dx * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn l4_norm_pow4(&self) -> f64 {
        self.grid.dx * self.values.iter().map(|v| (v * v) * (v * v)).sum::<f64>()
    }

    pub fn l4_norm(&self) -> f64 {
        self.l4_norm_pow4().sqrt().sqrt()
    }

    /// Squared `H^1_0` norm with forward differences over all `n + 1` gaps.
    pub fn h10_norm_sq(&self) -> f64 {
        let u = &self.values;
        let n = u.len();
        let mut acc = u[0] * u[0] + u[n - 1] * u[n - 1];
        for w in u.windows(2) {
            let d = w[1] - w[0];
            acc += d * d;
        }
        acc / self.grid.dx
    }

    pub fn h10_norm(&self) -> f64 {
        self.h10_norm_sq().sqrt()
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::L2 => self.l2_norm(),
            NormKind::L4 => self.l4_norm(),
            NormKind::H10 => self.h10_norm(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Field {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Field) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

pub fn norm(u: &Field, kind: NormKind) -> f64 {
    u.norm(kind)
}

/// Independent random stream keyed by `(master_seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id selecting one of its 2^64 independent
/// streams, so the sequence for a trajectory never depends on which worker
/// runs it or in what order.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    stream_id: u64,
    substream: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            substream: 0,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of increments drawn so far.
    pub fn substream(&self) -> u64 {
        self.substream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Fills `out` with i.i.d. `Normal(0, dt/dx)` entries.
    pub fn fill_white_increment(&mut self, dt: f64, out: &mut Field) {
        self.substream += 1;
        if dt == 0.0 {
            out.values.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let sd = (dt / out.grid.dx).sqrt();
        for v in out.values.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *v = sd * z;
        }
    }
}

/// Discrete cylindrical Wiener increment over a step `dt`.
pub fn sample_white_increment(grid: &Grid, dt: f64, stream: &mut NoiseStream) -> Result<Field> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be >= 0, got {dt}")));
    }
    let mut out = grid.zeros();
    stream.fill_white_increment(dt, &mut out);
    Ok(out)
}
