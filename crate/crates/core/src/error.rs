use std::path::PathBuf;

use thiserror::Error;

use crate::graph::NodeId;
use crate::validate::ValidityReport;

pub type Result<T, E = SpnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SpnError {
    #[error("length mismatch: expected {expected} variables, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("universe mismatch: expected {expected} variables, got {got}")]
    UniverseMismatch { expected: usize, got: usize },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("node {node} is not a {expected} node")]
    WrongNodeKind { node: NodeId, expected: &'static str },

    #[error("graph has no root")]
    NoRoot,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("adding {child} under {parent} would create a cycle")]
    Cycle { parent: NodeId, child: NodeId },

    #[error("scope of {child} does not match scope of sum node {parent}")]
    ScopeMismatch { parent: NodeId, child: NodeId },

    #[error("row {row} has zero likelihood")]
    ZeroLikelihood { row: usize },

    #[error("marginal joint of variables ({i}, {j}) sums to {total}")]
    Unnormalized { i: usize, j: usize, total: f64 },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid model: {0}")]
    Invalid(ValidityReport),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SpnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SpnError::Io {
            path: path.into(),
            source,
        }
    }
}
