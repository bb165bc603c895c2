use thiserror::Error;

/// Errors returned by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no circulation state exists for this input at block length {0}")]
    NoCirculationState(usize),
    #[error("({f1}, {f2}) is not a permutation polynomial modulo {m}")]
    NotPermutation { f1: u64, f2: u64, m: u64 },
    #[error("permutation polynomial has no quadratic inverse")]
    NoQuadraticInverse,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input does not terminate all constituent encoders")]
    NotTerminated,
    #[error("target rate {0} is not reachable with this configuration")]
    InfeasibleRate(f64),
    #[error("congruence {label}) does not hold")]
    CongruenceFailed { label: char },
    #[error("fundamental path anchored at {anchor} wraps the block end")]
    PathWraps { anchor: usize },
    #[error("patch input is not all-zero for offset {0}")]
    PatchInputNonzero(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
