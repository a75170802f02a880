use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Precondition violations are reported eagerly; certificate failures are not
/// errors and travel inside the corresponding report types instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("operator is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("base dimension mismatch: {left} vs {right}")]
    BaseDimMismatch { left: usize, right: usize },

    #[error("level {level} out of range 1..={max}")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("Fock space dimension overflows for d = {base_dim}, N = {level}")]
    DimensionOverflow { base_dim: usize, level: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rescaling factor {scale} must exceed the initial-condition norm {norm}")]
    ScaleTooSmall { scale: f64, norm: f64 },

    #[error("R undefined (not strictly dissipative): max Re spec(W1) = {max_real_part}")]
    NotStrictlyDissipative { max_real_part: f64 },

    #[error("operator is not dissipative: {0}")]
    NotDissipative(String),

    #[error("kernel inclusion violated: ||W2 v|| = {residual:e} on null(S2(W1))")]
    KernelInclusion { residual: f64 },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("matrix exponential overflow (norm {norm:e})")]
    Overflow { norm: f64 },

    #[error("lambda = {re}{im:+}i hits the spectrum (residual {residual:e})")]
    SpectrumHit { re: f64, im: f64, residual: f64 },

    #[error("solution blew up at t = {time}: norm {norm:e}")]
    BlowUp { time: f64, norm: f64 },

    #[error("K_M diverges for M = {0} (requires M > 2)")]
    DivergentOrder(u32),

    #[error("hyperviscosity order must be odd, got {0}")]
    EvenOrder(u32),

    #[error("nested family violated at member {member}: deviation {deviation:e}")]
    NestingViolation { member: usize, deviation: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
