use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sequence")]
    EmptySequence,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32, u8),
        actual: (u32, u32, u8),
    },

    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("image id `{0}` has no entry in the label mapping")]
    MissingLabel(String),

    #[error("image id `{0}` has no ground-truth entry")]
    MissingTruth(String),

    #[error("image id `{0}` is not in the ingest manifest")]
    UnknownImage(String),

    #[error("no training data: test cameras cover every camera")]
    NoTrainingData,

    #[error("no labels in mapping file {0}")]
    NoLabels(PathBuf),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {path}: header declares {expected} payload bytes, found {found}")]
    IdxTruncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: u32, labels: u32 },

    #[error("IDX file {path}: {message}")]
    IdxFormat { path: PathBuf, message: String },

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("failed to encode image {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("digit pool is missing {0}")]
    DigitPool(&'static str),

    #[error("object leaves the frame: {0}")]
    ObjectOutOfFrame(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
