use std::io;

use crate::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("vector norm {norm:e} is too small to normalize")]
    DegenerateVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("class {0} is not stored in memory")]
    UnknownClass(ClassId),

    #[error("cannot dequeue {requested} prototypes from a memory holding {available}")]
    Underflow { requested: usize, available: usize },

    #[error("no prototype for label {0}")]
    MissingPrototype(ClassId),

    #[error("invalid loss spec: {0}")]
    InvalidSpec(String),

    #[error("identity {0} does not exist in this world")]
    UnknownIdentity(ClassId),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("AUC is undefined: {0}")]
    DegenerateLabels(&'static str),

    #[error("non-finite loss at step {step}")]
    NumericFailure { step: u64 },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
