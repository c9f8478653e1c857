use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {file} at {record}: {message}")]
    Parse {
        file: String,
        record: String,
        message: String,
    },
    #[error("validation error in {scene}: {message}")]
    Validation { scene: String, message: String },
    #[error("unknown split name `{0}` (expected train, dev or test)")]
    UnknownSplit(String),
    #[error("split `{0}` is missing from the corpus")]
    MissingSplit(String),
    #[error("mention {mention} of {scene} has no gold character label")]
    MissingLabel { scene: String, mention: usize },
    #[error("empty training set")]
    EmptyTraining,
    #[error("sentence of {len} tokens exceeds the segment cap of {cap}; raise max_tokens")]
    SentenceTooLong { len: usize, cap: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("partitions cover different mention sets: {0}")]
    MentionSetMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("loss diverged at epoch {epoch}, step {step} (scene {scene}): {value}")]
    Divergence {
        epoch: usize,
        step: usize,
        scene: String,
        value: f64,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
