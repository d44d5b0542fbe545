use thiserror::Error;

/// Errors raised by the estimation, simulation and benchmarking layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("signal needs at least 2 samples, got {0}")]
    TooFewSamples(usize),

    #[error("signal contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("signals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("zero variance: all samples are equal")]
    ZeroVariance,

    #[error("lag {lag} outside [-{max}, {max}]")]
    LagOutOfRange { lag: i64, max: i64 },

    #[error("lag grid is degenerate: {0}")]
    DegenerateGrid(String),

    #[error("coordinate descent did not converge at lambda = {lambda} after {sweeps} sweeps")]
    NonConvergence { lambda: f64, sweeps: usize },

    #[error("penalty must be finite and nonnegative, got {0}")]
    InvalidPenalty(f64),

    #[error("solution path is empty")]
    EmptyPath,

    #[error("sparse reconstruction is identically zero (overpenalized fit)")]
    AllZeroReconstruction,

    #[error("overlap of {0} samples is too short for a correlation test (need at least 3)")]
    InsufficientOverlap(usize),

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("amount {0} is not strictly positive")]
    NonPositiveAmount(f64),

    #[error("shifted support leaves the series window entirely")]
    EmptySupport,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
