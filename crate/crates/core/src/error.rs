use thiserror::Error;

/// Errors produced by the segmentation toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node ({i}, {j}) outside grid {n1}x{n2}")]
    Index { i: usize, j: usize, n1: usize, n2: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("ingest error at byte {offset}: {message}")]
    Ingest { offset: usize, message: String },

    #[error("ingest error: {0}")]
    Decode(String),

    #[error("scene error: {0}")]
    Scene(String),

    #[error("seed mask conflict at node ({i}, {j})")]
    MaskConflict { i: usize, j: usize },

    #[error("constraint conflict at node ({i}, {j}): lower bound {w} is not below upper bound {v}")]
    ConstraintConflict { i: usize, j: usize, w: f64, v: f64 },

    #[error("solver contract violated: {0}")]
    Solver(String),

    #[error("LCP oracle found no consistent active set")]
    OracleFailure,

    #[error("non-finite value produced at flat index {0}")]
    NonFinite(usize),

    #[error("malformed level-set dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn ingest(offset: usize, message: impl Into<String>) -> Self {
        Error::Ingest { offset, message: message.into() }
    }
}
