use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid channel count: expected {expected}, got {got}")]
    InvalidChannels { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bounding box {0} does not intersect the image")]
    EmptyIntersection(String),

    #[error("decode error at byte {offset}: {msg}")]
    Decode { offset: usize, msg: String },

    #[error("degenerate point configuration: {0}")]
    Degenerate(String),

    #[error("no consensus: best model has {inliers} inliers, need at least 4")]
    NoConsensus { inliers: usize },

    #[error("point maps to infinity (homogeneous w = {0})")]
    PointAtInfinity(f64),

    #[error("homography is not invertible")]
    NotInvertible,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty or degenerate training data: {0}")]
    Training(String),

    #[error("manifest error ({path}): {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error("annotation error ({path}, line {line}): {msg}")]
    Annotation {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
