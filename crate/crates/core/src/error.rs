use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node {node} out of range (graph has {num_nodes} nodes)")]
    NodeOutOfRange { node: NodeId, num_nodes: usize },

    #[error("node {0} has no label but its label is needed")]
    MissingLabel(NodeId),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("model is not trained")]
    Untrained,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("only {available} correctly classified candidates for {requested} requested targets")]
    NotEnoughTargets { available: usize, requested: usize },

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("bad data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse category used for process exit codes and FFI status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::NodeOutOfRange { .. } => ErrorKind::Usage,
            Error::MissingLabel(_)
            | Error::DimensionMismatch(_)
            | Error::Malformed { .. }
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::Untrained | Error::Diverged(_) | Error::NotEnoughTargets { .. } => {
                ErrorKind::Runtime
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Runtime,
}
