//! Error type shared across the pipeline.

use std::path::PathBuf;

/// Errors produced by pipeline stages.
///
/// The CLI maps these onto exit codes: configuration and usage problems
/// exit 1, data problems exit 2, numerical failures exit 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing upstream artifact {path}: run `careerplane {producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. }
            | Error::MalformedFile { .. }
            | Error::Data(_)
            | Error::MissingArtifact { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}
