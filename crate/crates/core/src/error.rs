use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid too small: axis {axis} has {nodes} nodes (need at least 3)")]
    GridTooSmall { axis: usize, nodes: usize },

    #[error("node {node} is closer than {required} nodes to the boundary")]
    NearBoundary { node: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("solver diverged after {iterations} iterations (residual {residual:e}, best {best:e})")]
    Divergence {
        iterations: usize,
        residual: f64,
        best: f64,
        history: Vec<f64>,
    },

    #[error("iteration did not converge within {iterations} iterations (last change {last:e})")]
    NotConverged { iterations: usize, last: f64 },

    #[error("system has no potential")]
    MissingPotential,

    #[error("frame {0} is not supported by this operation")]
    UnsupportedFrame(String),

    #[error("test function is not compactly supported (nonzero at node {node})")]
    NotCompactlySupported { node: usize },

    #[error("input is not a solution: residual {residual:e} exceeds {limit:e}")]
    NotASolution { residual: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
