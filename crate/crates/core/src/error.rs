use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("descriptor has zero norm")]
    ZeroNorm,

    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("no candidates left to match against")]
    EmptyCandidates,

    #[error("candidate index {0} out of range")]
    IndexOutOfRange(usize),

    #[error("stream too short: {len} frames, need at least {needed}")]
    StreamTooShort { len: usize, needed: usize },

    #[error("frame index {got} does not follow {prev}")]
    NonMonotonicFrame { prev: u64, got: u64 },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("self-arc on node {0}")]
    SelfArc(NodeId),

    #[error("no path from {from} to {to}")]
    NoPath { from: NodeId, to: NodeId },

    #[error("format error at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported map version {0:?}")]
    Version(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad optimization thresholds: merge {merge} must exceed sparsify {sparsify}")]
    BadThresholds { merge: f64, sparsify: f64 },

    #[error("navigator is not in a steppable phase ({0})")]
    InvalidPhase(&'static str),

    #[error("observation has no left/middle/right segment descriptors")]
    MissingSegments,

    #[error("goal not in map: best node {best} scored {score:.4}")]
    GoalNotInMap { best: NodeId, score: f64 },

    #[error("waypoint {index} not reached within {budget} steps")]
    UnreachableWaypoint { index: usize, budget: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn from_json(err: serde_json::Error, line_offset: usize) -> Self {
        // serde_json reports data errors at the end of the offending value.
        Error::Format {
            line: err.line() + line_offset,
            column: err.column(),
            message: err.to_string(),
        }
    }
}
