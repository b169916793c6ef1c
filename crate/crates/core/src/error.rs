use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VqrError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    /// A solver ran out of iterations. The message names where (for the
    /// entropic backend this includes the grid row that failed).
    #[error("iteration limit reached: {0}")]
    IterationLimit(String),

    /// A state that should be unreachable for valid inputs, e.g. an
    /// infeasible LP built from a centered sample.
    #[error("internal solver error: {0}")]
    Internal(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VqrError {
    /// True for errors caused by bad user input, as opposed to solver trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            VqrError::Parse { .. }
                | VqrError::Validation(_)
                | VqrError::Dimension(_)
                | VqrError::Size(_)
                | VqrError::Io(_)
                | VqrError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, VqrError>;
