use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("design matrix is rank deficient; offending columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("matrix is singular ({context}); eigenvalues: {eigenvalues:?}")]
    Singular {
        context: String,
        eigenvalues: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("likelihood underflow at observations {indices:?}")]
    Underflow { indices: Vec<usize> },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
