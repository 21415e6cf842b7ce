use thiserror::Error;

/// Errors produced by the solver toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain invariant does not hold. `invariant` names the rule that failed.
    #[error("validation failed ({invariant}): {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-physical state: minimum eigenvalue {0:e} below tolerance")]
    NonPhysical(f64),

    /// The spin sector constraint (odd count, total magnetization one) is violated.
    #[error("magnetization constraint violated: {0}")]
    Constraint(String),

    #[error("instance too large: {0}")]
    Size(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
