//! Reflection coupling for 1-D stochastic reaction-diffusion and Burgers
//! equations driven by space-time white noise.
//!
//! The modules build on each other bottom-up:
//!
//! - [`grid_noise`]: Dirichlet grid, discrete norms, counter-based noise streams.
//! - [`spde_solvers`]: drifts, the `L^4` cut-off, the semi-implicit stepper,
//!   deterministic Burgers and an exact spectral Ornstein-Uhlenbeck sampler.
//! - [`lyapunov`]: tabulated Lyapunov functions of the pair distance.
//! - [`reflection_coupling`]: the coupled pair and coupling-time extraction.
//! - [`burgers_staged`]: the block-wise coupling for the Burgers equation.
//! - [`stats`]: the estimators and tests shared by the above.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod burgers_staged;
pub mod error;
pub mod grid_noise;
pub mod lyapunov;
pub mod quadrature;
pub mod reflection_coupling;
pub mod spde_solvers;
pub mod spline;
pub mod stats;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid_noise::{make_grid, Field, Grid, NoiseStream, NormKind};
pub use spde_solvers::{DriftSpec, SolverConfig, Stepper};
