use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The post-step `L^4` norm crossed the configured guard.
    #[error("blow-up: |u|_L4 = {norm} exceeds guard {guard}")]
    BlowUp { norm: f64, guard: f64 },
    #[error("quadrature failed to reach tolerance {tol} on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64, tol: f64 },
    #[error("argument {r} outside table range [0, {r_max}]")]
    OutOfRange { r: f64, r_max: f64 },
    #[error("value not representable in f64 (log value {0})")]
    Overflow(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
