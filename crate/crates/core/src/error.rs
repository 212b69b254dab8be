//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model evaluation, estimation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two related arguments disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter value violates an invariant of its type.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A covariance factorization failed; `minor` is the 1-based order of the
    /// leading principal minor that is not positive.
    #[error("matrix is not positive definite (leading minor of order {minor})")]
    NotPositiveDefinite { minor: usize },

    /// The weighted normal equations for one item row are singular.
    #[error("singular normal equations for item {item}")]
    SingularNormalEquations { item: usize },

    /// A mixture component received (numerically) zero total responsibility.
    #[error("empty component: {component} has zero total weight")]
    EmptyComponent { component: &'static str },

    /// Every EM start failed; per-start causes are carried along.
    #[error("all {n_starts} EM starts failed: {}", causes.join("; "))]
    AllStartsFailed { n_starts: usize, causes: Vec<String> },

    /// More than 20% of bootstrap replicates failed to converge.
    #[error("bootstrap dropped {dropped} of {total} replicates (> 20%)")]
    TooManyDroppedReplicates { dropped: usize, total: usize },

    /// A per-class computation needs more rows than the class holds.
    #[error("class {class} has {rows} rows; at least {min} required")]
    ClassTooSmall { class: u8, rows: usize, min: usize },

    /// A numeric computation degenerated beyond recovery.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// A CSV cell could not be parsed; coordinates are 1-based.
    #[error("bad CSV cell at row {row}, column {col}: {message}")]
    CsvCell { row: usize, col: usize, message: String },

    /// Malformed CSV input (ragged rows, empty file, ...).
    #[error("malformed CSV input: {0}")]
    CsvShape(String),

    /// JSON (de)serialization failure.
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Underlying I/O failure, with path context where available.
    #[error("I/O error{}: {source}", path.as_deref().map(|p| format!(" ({p})")).unwrap_or_default())]
    Io {
        path: Option<String>,
        #[source]
        source: std::io::Error,
    },
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

impl Error {
    /// Attach a path to an I/O error for context.
    pub fn io_at(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
