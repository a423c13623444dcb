use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("vertex {vertex} out of range for {num_vertices} vertices")]
    VertexOutOfRange { vertex: usize, num_vertices: usize },

    #[error("polygon {index} is not a cycle of the skeleton: {reason}")]
    InvalidPolygon { index: usize, reason: String },

    #[error("incidence matrices are inconsistent: B1*B2 has nonzero entry at ({row}, {col})")]
    BoundaryNotClosed { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("QP infeasible (d = {d}, eps = {eps}): {detail}")]
    Infeasible { d: f64, eps: f64, detail: String },

    #[error("QP solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
