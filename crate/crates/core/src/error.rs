use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },

    #[error("no rows")]
    Empty,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("recovery assumption violated for pair ({i}, {j}) in cluster {cluster}: {reason}")]
    AssumptionViolated { i: usize, j: usize, cluster: usize, reason: String },

    #[error("line search failed after {backtracks} backtracks (‖∇φ‖ = {grad_norm:e})")]
    LineSearchFailed { backtracks: usize, grad_norm: f64 },

    #[error("operator not positive definite: ⟨p, Vp⟩ = {curvature:e} at CG iteration {iteration}")]
    NotPositiveDefinite { iteration: usize, curvature: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("non-finite iterate in {0}")]
    NonFiniteIterate(&'static str),

    #[error("{0} is only implemented for p = 2; use the ADMM solver for p = 1 or p = ∞")]
    UnsupportedNorm(&'static str),

    #[error("solve failed at γ = {gamma}: {source}")]
    AtGamma {
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
