use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("need at least {needed} vectors, got {actual}")]
    TooFewVectors { needed: usize, actual: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite value produced in {context}")]
    NonFinite { context: &'static str },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no samples")]
    NoSamples,

    #[error("empty minibatch")]
    EmptyBatch,

    #[error("sample index {index} out of range for {len} samples")]
    InvalidIndex { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("krum needs n - B - 2 >= 1, got n = {n}, B = {assumed_byzantine}")]
    KrumInfeasible { n: usize, assumed_byzantine: usize },

    #[error("conditioning event has probability zero")]
    ImpossibleCondition,

    #[error("missing attack context: {0}")]
    MissingAttackContext(&'static str),

    #[error("solver did not converge within {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Toml(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
