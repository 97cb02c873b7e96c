use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("non-finite gradient in parameter tensor {tensor} at element {element}")]
    NonFiniteGradient { tensor: usize, element: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid ensemble spec for subset {subset}: {reason}")]
    Spec { subset: String, reason: String },

    #[error("unknown subset {0}")]
    UnknownSubset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} (phase {phase}): non-finite loss")]
    Diverged { epoch: usize, phase: String },

    #[error("enumeration too large: {count} datasets exceed the limit of {limit}")]
    TooLarge { count: u128, limit: u128 },

    #[error("cannot place part {part}: demand {demand} exceeds every server's remaining capacity")]
    Placement { part: String, demand: u64 },

    #[error("invalid failure trace: {0}")]
    Trace(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
