use std::path::PathBuf;

/// Errors raised by the trajectory toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: Option<String>,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite coordinate in trajectory `{id}`")]
    NonFinite { id: String },

    #[error("duplicate trajectory id `{0}`")]
    DuplicateId(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient points: need at least {needed}, have {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("dataset has no labels: {0}")]
    MissingLabels(String),

    #[error("kernel mismatch: {0}")]
    KernelMismatch(String),

    #[error("numerically singular landmark kernel matrix")]
    SingularKernel,

    #[error("pair ({a}, {b})")]
    Pair {
        a: String,
        b: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid model file: {0}")]
    Format(String),
}

fn context_suffix(context: &Option<String>) -> String {
    match context {
        Some(c) => format!(" ({c})"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            found,
            context: None,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
