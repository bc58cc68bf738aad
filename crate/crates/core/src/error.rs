use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsnError {
    /// A precondition of the called operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The point dimension does not match the model dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The operation does not apply to this variant.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// An improper integral was classified as divergent.
    #[error("divergent integral: {0}")]
    Divergent(String),

    /// Numerical failure (non-finite value, exhausted budget).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration could not be parsed or validated.
    #[error("config error at `{pointer}`: {message}")]
    Config { pointer: String, message: String },
}

pub type Result<T> = std::result::Result<T, EsnError>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(EsnError::Contract(msg.into()))
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(EsnError::Dimension { expected, got })
    }
}
