use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of a function (basis index, evaluation point).
    #[error("domain error: {what} = {value} ({expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid function family: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The estimator needs `log n > 1` for its eigenvalue threshold to make sense.
    #[error("degenerate sample: n = {n}, at least 3 observations are required")]
    DegenerateSample { n: usize },

    #[error("degenerate study: {0}")]
    DegenerateStudy(String),

    #[error("variance oracle covers {available} indices but {needed} are required")]
    InsufficientOracle { needed: usize, available: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidConfig(_) => "invalid_config",
            Error::DegenerateSample { .. } => "degenerate_sample",
            Error::DegenerateStudy(_) => "degenerate_study",
            Error::InsufficientOracle { .. } => "insufficient_oracle",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
