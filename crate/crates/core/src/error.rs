use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown distance `{name}` (registered: {known})")]
    UnknownDistance { name: String, known: String },

    #[error("distance `{name}`: {message}")]
    Distance { name: String, message: String },

    #[error("payload kind mismatch: {0}")]
    PayloadKind(String),

    #[error("instance id `{0}` is not present in the prediction table")]
    MissingPrediction(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn distance(name: &str, message: impl Into<String>) -> Self {
        Error::Distance {
            name: name.to_owned(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnknownDistance { .. } => 2,
            Error::Format { .. }
            | Error::Io { .. }
            | Error::PayloadKind(_)
            | Error::MissingPrediction(_)
            | Error::Model(_)
            | Error::Data(_) => 3,
            Error::Distance { .. } | Error::Internal(_) => 4,
        }
    }
}
