use std::path::PathBuf;

use ahfusion_core::CoreError;

use crate::checkpoint::CheckpointError;
use crate::emb_file::EmbError;
use crate::manifest::ManifestError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Embedding {
        path: PathBuf,
        #[source]
        source: EmbError,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("config {path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 usage, 3 data, 4 numeric, 5 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config { .. } => 2,
            Error::Core(e) => match e {
                CoreError::NonFiniteLoss { .. } | CoreError::NonFiniteCheck => 4,
                CoreError::InvalidConfig(_)
                | CoreError::HeadsDoNotDivide { .. }
                | CoreError::DropoutRange(_)
                | CoreError::StepBeyondHorizon { .. } => 2,
                _ => 3,
            },
            Error::Verification(_) => 5,
            Error::Io { .. } | Error::Embedding { .. } | Error::Manifest(_) | Error::Checkpoint { .. } | Error::Data(_) => 3,
        }
    }
}
