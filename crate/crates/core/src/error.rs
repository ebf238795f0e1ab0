use thiserror::Error;

use crate::model::TypeIndex;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("type index {value} outside 1..={types}")]
    TypeOutOfRange { value: usize, types: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilityVector(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("life table rows for type {from} at time {time} disagree across child types: {totals:?}")]
    RowInconsistent {
        from: TypeIndex,
        time: u32,
        totals: Vec<(TypeIndex, u64)>,
    },

    #[error("pair ({from},{to}) has data at offspring count {offspring} outside the prior support")]
    OutsideSupport {
        from: TypeIndex,
        to: TypeIndex,
        offspring: u32,
    },

    #[error("mean matrix is identically zero; no Perron root")]
    ZeroMatrix,

    #[error("fixed-point iteration stopped after {iterations} steps with residual {residual:e}")]
    FixedPointCap {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("survival bounds need a subcritical draw, got lambda = {lambda}")]
    NotSubcritical { lambda: f64 },

    #[error("no replicate satisfied lambda < 1; extinction-time bounds unavailable")]
    NoSubcriticalDraws,

    #[error("search did not reach the target within the cap of {cap}")]
    OpenEnded { cap: u64 },

    #[error("regression trend is not decreasing (slope {slope}); no finite extinction interval")]
    NoDecline { slope: f64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
