use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("interpolation fraction {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("cloud is in the {actual:?} frame, expected {expected:?}")]
    WrongFrame {
        expected: crate::se3::Frame,
        actual: crate::se3::Frame,
    },

    #[error("task description is empty")]
    EmptyDescription,
    #[error("waypoint spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("trajectory needs at least 2 states, got {0}")]
    TrajectoryTooShort(usize),
    #[error("time indices must be strictly increasing (at state {0})")]
    NonMonotonicTime(usize),
    #[error("duplicate demonstration id {0:?} with different content")]
    DuplicateId(String),
    #[error("invalid demonstration id {0:?}: use [A-Za-z0-9_.-]")]
    InvalidId(String),
    #[error("no demonstration with id {0:?}")]
    UnknownDemo(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no point of the cloud falls inside the embedding grid")]
    OutOfWorkspace,
    #[error("embeddings were computed on different grids")]
    GridMismatch,
    #[error("embedding has zero norm")]
    ZeroEmbedding,

    #[error("no demonstration teaches micro skill {0:?}")]
    UnknownSkill(String),
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no correspondences within the inlier radius at the initial pose")]
    NoCorrespondences,

    #[error("unknown object category {0:?}")]
    UnknownCategory(String),
    #[error("no point of the object is visible from the camera")]
    NothingVisible,

    #[error("number of trials must be at least 1")]
    InvalidTrials,
    #[error("successes {k} exceed trials {n}")]
    InvalidCount { k: u64, n: u64 },
    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Errors caused by the query itself rather than malformed input: the task
    /// was never taught, or the object lies outside the descriptor volume.
    pub fn is_retrieval_domain(&self) -> bool {
        matches!(self, Error::UnknownSkill(_) | Error::OutOfWorkspace)
    }
}
