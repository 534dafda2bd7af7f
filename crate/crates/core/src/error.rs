use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulation order {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("unsupported modulation order {0} (supported: 2..=512)")]
    UnsupportedOrder(usize),
    #[error("modulation scheme {scheme} cannot be used with order {order}")]
    SchemeMismatch { scheme: String, order: usize },
    #[error("expected {expected} bits, got {actual}")]
    WrongBitCount { expected: usize, actual: usize },
    #[error("bit values must be 0 or 1, found {0}")]
    InvalidBit(u8),
    #[error("constellation order {constellation} does not match configured order {configured}")]
    ConstellationMismatch { constellation: usize, configured: usize },
    #[error("index {index} outside 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("symbol {0} is not a point of the constellation")]
    NotAConstellationPoint(num_complex::Complex64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid noise variance {0}")]
    InvalidNoiseVariance(f64),
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("target BER {0:e} is not bracketed by both curves")]
    TargetNotBracketed(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{field}`: {constraint}")]
    Validation { field: String, constraint: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
