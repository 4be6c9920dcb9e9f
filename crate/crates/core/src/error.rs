use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the benchmarking library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("connect error for {url}: {message}")]
    Connect { url: String, message: String },

    #[error("timeout waiting on {url}: {message}")]
    Timeout { url: String, message: String },

    #[error("protocol error from {url}: {message}")]
    Protocol { url: String, message: String },

    #[error("model `{model}` not found on {url}: {body}")]
    ModelNotFound {
        url: String,
        model: String,
        body: String,
    },

    #[error("runtime kind `{0}` is not supported by this harness")]
    UnsupportedRuntime(String),

    #[error("empty power trace")]
    EmptyTrace,

    #[error("window [{t0}, {t1}] outside trace coverage [{lo}, {hi}]")]
    WindowOutsideTrace { t0: f64, t1: f64, lo: f64, hi: f64 },

    #[error("objective `{field}` missing on point `{key}`")]
    MissingObjective { field: String, key: String },

    #[error("store error at {path}: {message}")]
    Store { path: PathBuf, message: String },

    #[error("bind failure on {addr}: {message}")]
    Bind { addr: String, message: String },

    #[error("warmup failed for {context}: {message}")]
    WarmupFailed { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-parsable class name, used by the CLI error line.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Connect { .. } => "connect",
            Error::Timeout { .. } => "timeout",
            Error::Protocol { .. } => "protocol",
            Error::ModelNotFound { .. } => "model-not-found",
            Error::UnsupportedRuntime(_) => "unsupported-runtime",
            Error::EmptyTrace => "empty-trace",
            Error::WindowOutsideTrace { .. } => "window-outside-trace",
            Error::MissingObjective { .. } => "missing-objective",
            Error::Store { .. } => "store",
            Error::Bind { .. } => "bind",
            Error::WarmupFailed { .. } => "warmup",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of the endpoint/transport class (CLI exit code 2).
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Error::Connect { .. }
                | Error::Timeout { .. }
                | Error::Protocol { .. }
                | Error::ModelNotFound { .. }
                | Error::WarmupFailed { .. }
        )
    }
}
