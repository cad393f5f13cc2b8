use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unstable queue: traffic intensity rho = {rho} (must be < 1)")]
    Unstable { rho: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("insufficient data: need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("arrival stream not sorted at index {index}")]
    Unsorted { index: usize },

    #[error("invalid service mark {value} at index {index}")]
    InvalidMark { index: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("mean mismatch for {label}: expected {expected}, got {actual}")]
    MeanMismatch {
        label: String,
        expected: f64,
        actual: f64,
    },

    #[error("numeric degeneracy: {0}")]
    NumericDegeneracy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidDistribution(_)
                | Error::Domain(_)
                | Error::Unstable { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidChannel(_)
                | Error::MeanMismatch { .. }
                | Error::Unsorted { .. }
                | Error::InvalidMark { .. }
        )
    }
}
