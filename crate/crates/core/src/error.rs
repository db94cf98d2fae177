use std::path::PathBuf;

/// Errors raised anywhere in the selection pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("non-numeric cell at ({row},{col}): {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },
    #[error("response column {0:?} not found in header")]
    MissingResponseColumn(String),
    #[error("non-binary response: value {0} is neither 0 nor 1")]
    NonBinaryResponse(f64),
    #[error("degenerate response: {0}")]
    DegenerateResponse(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("constant column {0:?} cannot be standardized")]
    ConstantColumn(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    #[error("cluster {index}: {source}")]
    Cluster {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("covariate {name:?}: {source}")]
    Covariate {
        name: String,
        #[source]
        source: Box<Error>,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }

    pub fn in_cluster(self, index: usize) -> Self {
        Error::Cluster { index, source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Cluster { source, .. } | Error::Covariate { source, .. } | Error::Stage { source, .. } => {
                source.root()
            }
            other => other,
        }
    }

    /// True for errors caused by the caller's arguments rather than by data.
    pub fn is_usage(&self) -> bool {
        matches!(self.root(), Error::InvalidArgument(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
