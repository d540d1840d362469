use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("column '{column}' named for role '{role}' is not present in the input")]
    MissingColumn { role: String, column: String },

    #[error("cannot parse value '{value}' at row {row}, column '{column}' as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing value at row {row}, column '{column}'")]
    MissingValue { row: usize, column: String },

    #[error("{0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("singular design: {0}")]
    Singular(String),

    #[error("maximum-likelihood fit did not converge: {0}")]
    FitFailed(String),

    #[error("no finite initial point found after {attempts} attempts")]
    Initialization { attempts: usize },

    #[error(
        "probability {value} for {name} is degenerate on the {scale} scale; \
         rerun with expectation-scale outcome simulation"
    )]
    DegenerateProbability {
        name: &'static str,
        value: f64,
        scale: &'static str,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::MissingColumn { .. } | Error::Config(_) | Error::Dimension(_) => {
                ErrorCategory::Config
            }
            Error::Parse { .. }
            | Error::MissingValue { .. }
            | Error::Domain(_)
            | Error::Io { .. }
            | Error::Csv(_) => ErrorCategory::Data,
            Error::Numeric(_)
            | Error::Singular(_)
            | Error::FitFailed(_)
            | Error::Initialization { .. }
            | Error::DegenerateProbability { .. } => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
