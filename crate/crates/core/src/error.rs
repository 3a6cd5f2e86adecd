use thiserror::Error;

use crate::lp::LpError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("measures are not in convex order")]
    NotInConvexOrder { certificate: Vec<f64> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("no irreducible instance found after {attempts} draws")]
    GenerationExhausted { attempts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
