use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate frame: eye landmarks {left} and {right} coincide")]
    DegenerateFrame { left: usize, right: usize },

    #[error("landmark index {index} out of range for {count} landmarks")]
    LandmarkIndex { index: usize, count: usize },

    #[error("empty image")]
    EmptyImage,

    #[error("node has no samples")]
    EmptyNode,

    #[error("tree count must be positive")]
    ZeroTrees,

    #[error("dataset needs at least {needed} labels, found {found}")]
    TooFewLabels { needed: usize, found: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("empty training pose set")]
    EmptyPoseSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model format: {0}")]
    Format(String),

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
