//! One error type for the whole binary, with a stable one-line rendering:
//! `error: <class>: <message>` on stderr and a nonzero exit code.

use std::path::PathBuf;

use shallowface_core::dataset::DatasetError;
use shallowface_core::embed::EmbedError;
use shallowface_core::matcher::MatchError;
use shallowface_core::nn::NnError;
use shallowface_core::protocol::ProtocolError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl CliError {
    /// Stable machine-parsable class, the first token after `error:`.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Nn(NnError::EmptyModel) => "parse",
            CliError::Nn(_) => "shape",
            CliError::Dataset(_) => "data",
            CliError::Embed(EmbedError::DimensionMismatch { .. }) => "shape",
            CliError::Embed(_) => "numeric",
            CliError::Match(_) => "data",
            CliError::Protocol(ProtocolError::BadConfig(_)) => "config",
            CliError::Protocol(ProtocolError::Embed(EmbedError::DimensionMismatch { .. })) => {
                "shape"
            }
            CliError::Protocol(ProtocolError::Embed(_)) => "numeric",
            CliError::Protocol(_) => "data",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Attaches the offending path to an IO error.
pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

/// Attaches the offending path to a parse failure.
pub fn parse_err(path: impl Into<PathBuf>, message: impl ToString) -> CliError {
    CliError::Parse {
        path: path.into(),
        message: message.to_string(),
    }
}
