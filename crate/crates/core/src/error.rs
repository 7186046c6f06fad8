use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: parse error at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("mesh has non-finite coordinates")]
    NonFiniteCoordinates,

    #[error("mesh is not watertight")]
    NotWatertight,

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error(
        "volume sampling gave up after {attempts} attempts ({accepted} of {requested} accepted)"
    )]
    SamplingFailed {
        attempts: usize,
        accepted: usize,
        requested: usize,
    },

    #[error("image has no foreground pixels")]
    EmptyForeground,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("oracle estimator requires ground-truth context")]
    MissingContext,

    #[error("estimator protocol error: {0}")]
    Protocol(String),

    #[error("estimator transport error: {0}")]
    Transport(String),

    #[error("remote estimator error: {0}")]
    Remote(String),

    #[error("corpus not found: {0}")]
    CorpusNotFound(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
