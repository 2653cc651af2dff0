use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A configuration field violates its invariant.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("alignment matrix has not been solved yet")]
    Unsolved,

    #[error("ridge system is not positive definite (lambda = {0})")]
    Singular(f64),

    #[error("unknown token: {0}")]
    UnknownToken(String),

    #[error("model file: {0}")]
    Model(String),

    /// A remote embedder failed after exhausting its retries.
    #[error("remote embedder failed after {attempts} attempt(s): {message}")]
    Remote { attempts: u32, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
