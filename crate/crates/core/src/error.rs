use thiserror::Error;

/// Errors raised by the geometry, metric, operator, envelope, solver and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("field index {index} out of range (system has {fields} fields)")]
    FieldIndex { index: usize, fields: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("trajectory left the domain at flow time {time:.6}")]
    ExitedDomain { time: f64, point: Vec<f64> },

    #[error("jacobian is singular at {0:?}")]
    SingularJacobian(Vec<f64>),

    #[error("target is unreachable in the horizontal graph at this resolution")]
    Unreachable,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("node {node} has no full central-difference stencil")]
    BoundaryStencil { node: usize },

    #[error("operator is not differentiable at a vanishing horizontal gradient")]
    NonDifferentiable,

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("sub/super pair certification failed at {} node(s)", nodes.len())]
    Certification { nodes: Vec<(usize, f64)> },

    #[error("fields are defined on different grids")]
    GridMismatch,

    #[error("insufficient table: {0}")]
    InsufficientTable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
