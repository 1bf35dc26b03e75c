use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("covariance matrix is not positive definite at jitter {jitter:e}; increase the jitter")]
    NotPositiveDefinite { jitter: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sobol generator supports at most {max} dimensions, requested {dim}")]
    SobolDimension { dim: usize, max: usize },
    #[error("refusing to enumerate 2^{dim} corners (limit is 16 dimensions)")]
    CornerExplosion { dim: usize },
    #[error("no data points")]
    Empty,
    #[error("objective evaluation failed: {0}")]
    Evaluation(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
