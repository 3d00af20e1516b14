use thiserror::Error;

/// Errors raised by the numerical kernels, the estimators and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An iterative solver hit its iteration cap. `last` carries the final iterate when
    /// the solver produces a vector.
    #[error("{solver} did not converge after {iterations} iterations")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        last: Option<Vec<f64>>,
    },

    #[error("degenerate input: matrix has rank {rank}, expected {expected}")]
    DegenerateInput { rank: usize, expected: usize },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("factorization failed: {0}; try a larger regularization gamma")]
    Singular(String),

    #[error("group {group} has soft count {mass:.3e}, below the minimum {min_mass:.3e}")]
    EmptyCluster {
        group: usize,
        mass: f64,
        min_mass: f64,
    },

    #[error("fit failed after {restarts} restarts: {last}")]
    FitFailure { restarts: usize, last: Box<Error> },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("every candidate fit failed during selection")]
    SelectionFailure,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NonFinite(_) => "non_finite",
            Error::Convergence { .. } => "convergence",
            Error::DegenerateInput { .. } => "degenerate_input",
            Error::DegenerateModel(_) => "degenerate_model",
            Error::Singular(_) => "singular",
            Error::EmptyCluster { .. } => "empty_cluster",
            Error::FitFailure { .. } => "fit_failure",
            Error::Parse { .. } => "parse",
            Error::SelectionFailure => "selection_failure",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
