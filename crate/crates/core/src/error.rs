use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside its physical domain (box bounds, degenerate geometry).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-supplied argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    /// An operation produced NaN or infinity.
    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    /// An object was used before it was fitted or trained.
    #[error("invalid state: {0}")]
    State(String),

    #[error("schema error: {0}")]
    Schema(String),

    /// Unsupported or malformed file content, located by token and byte offset.
    #[error("format error at byte {offset}: {message} (token `{token}`)")]
    Format {
        message: String,
        token: String,
        offset: usize,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    /// A metric is undefined for the supplied data (e.g. zero-variance targets).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line tool: 1 usage, 2 data/schema, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::State(_) => 1,
            Error::Domain(_)
            | Error::Schema(_)
            | Error::Format { .. }
            | Error::Integrity(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Shape { .. } | Error::NonFinite(_) | Error::NotApplicable(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
