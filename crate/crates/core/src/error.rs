use thiserror::Error;

pub type Result<T, E = DinoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DinoError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("timed out: {0}")]
    Timeout(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DinoError {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        DinoError::NonFinite {
            context: context.into(),
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(DinoError::DimensionMismatch { expected, got })
    }
}
