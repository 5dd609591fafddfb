use std::path::PathBuf;

use crate::geometry::CellCoord;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid pose {0:?}: not a free cell of the ground truth")]
    InvalidPose(CellCoord),

    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("ground truth has no free cells")]
    NoFreeSpace,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("map file parse error at line {line}: {msg}")]
    MapParse { line: usize, msg: String },

    #[error("weights file error: {0}")]
    Weights(String),

    #[error("episode with seed {seed} failed: {source}")]
    Episode {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
