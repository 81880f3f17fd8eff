use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("system is not observable (observability rank {rank} < {n})")]
    NotObservable { rank: usize, n: usize },

    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    #[error("simulation diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Dimension(_)
                | Error::UnsupportedShape(_)
                | Error::GridMismatch(_)
        )
    }
}
