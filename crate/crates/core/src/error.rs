use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {msg}")]
    Parse { context: String, msg: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("tree growth failed: {0}")]
    Growth(String),

    #[error("cannot locate {0}")]
    Locate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("budget exhausted: {0}")]
    Budget(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), msg: msg.into() }
    }

    /// Short machine-readable category used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => "parse",
            Error::Mesh(_) => "mesh",
            Error::Numeric(_) => "numeric",
            Error::Growth(_) => "growth",
            Error::Locate(_) => "locate",
            Error::Config(_) => "config",
            Error::Budget(_) => "budget",
        }
    }

    /// Process exit code: 2 for input/config problems, 3 for numerical
    /// failures, 4 for an exhausted budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::Config(_) => 2,
            Error::Mesh(_) | Error::Numeric(_) | Error::Growth(_) | Error::Locate(_) => 3,
            Error::Budget(_) => 4,
        }
    }
}
