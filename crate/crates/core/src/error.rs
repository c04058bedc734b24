use thiserror::Error;

/// Errors produced anywhere in the simulation and checking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undersized grid: {0}")]
    UndersizedGrid(String),

    #[error("field has {got} values but the grid has {expected} active nodes")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("field belongs to a different grid")]
    GridMismatch,

    #[error("non-finite field value at node {0}")]
    NonFinite(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fibering map has no finite maximizer (power term vanishes)")]
    UnboundedFibering,

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
