use thiserror::Error;

/// Errors produced by the registration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("location ids do not match: {}", .offenders.join(", "))]
    IdMismatch { offenders: Vec<String> },

    #[error(
        "covariance matrix is not positive definite (min eigenvalue {min_eigenvalue:e}); \
         Euclideanize the distance matrix first or use nonspatial mode"
    )]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("ill-conditioned covariance matrix (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// True for failures caused by floating-point conditioning rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::IllConditioned { .. } | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
