use std::path::PathBuf;

/// Errors produced by the localization library and its evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate intersection")]
    DegenerateIntersection,
    #[error("degenerate line: (a, b) must not both be zero")]
    DegenerateLine,
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(&'static str),
    #[error("singular homography")]
    SingularHomography,
    #[error("unrectifiable quadrilateral")]
    Unrectifiable,
    #[error("zero-length segment")]
    ZeroLengthSegment,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no valid manifest entries in {0}")]
    EmptyManifest(PathBuf),
    #[error("unrecognized dataset layout under {root}: {expected}")]
    DatasetLayout { root: PathBuf, expected: String },
    #[error("{0}")]
    Harness(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
