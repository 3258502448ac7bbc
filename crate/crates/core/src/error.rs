use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or volume dimensions do not satisfy an operation's contract.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation was called outside its contract (wrong mode, missing state).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is missing, malformed, or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A file could not be parsed. `key` names the offending header field.
    #[error("parse error in {path}: {key}: {message}")]
    Parse {
        path: PathBuf,
        key: String,
        message: String,
    },

    /// A geometric transform would produce a degenerate or out-of-bounds result.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A metric is undefined for the given inputs (e.g. an empty mask).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A computation produced NaN or infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        key: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            key: key.into(),
            message: message.into(),
        }
    }

    /// Prefixes the message with `ctx` (e.g. a case id), keeping the kind.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            Error::Shape(m) => Error::Shape(format!("{ctx}: {m}")),
            Error::Contract(m) => Error::Contract(format!("{ctx}: {m}")),
            Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
            Error::Geometry(m) => Error::Geometry(format!("{ctx}: {m}")),
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("{ctx}: {m}")),
            Error::NonFinite(m) => Error::NonFinite(format!("{ctx}: {m}")),
            Error::Parse { path, key, message } => Error::Parse {
                path,
                key,
                message: format!("{ctx}: {message}"),
            },
            io @ Error::Io { .. } => io,
        }
    }

    /// True for errors caused by the caller's inputs or configuration rather
    /// than by a numerical or internal failure.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Geometry(_)
        )
    }
}
