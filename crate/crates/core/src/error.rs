use thiserror::Error;

/// Errors raised across the pipeline.
///
/// The variants map one-to-one onto the CLI exit codes: validation and
/// parse failures exit with 2, burn-in with 3, resource budgets with 4.
#[derive(Debug, Error)]
pub enum HecaError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("insufficient history at round {round}: first feasible round is {first_feasible}")]
    BurnIn { round: usize, first_feasible: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("resource budget exceeded: {0}")]
    ResourceExceeded(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HecaError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        HecaError::Validation(msg.into())
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            HecaError::Parse { .. } | HecaError::Validation(_) | HecaError::Infeasible(_) => 2,
            HecaError::BurnIn { .. } => 3,
            HecaError::ResourceExceeded(_) => 4,
            HecaError::Numerical(_) | HecaError::Io(_) | HecaError::Csv(_) | HecaError::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HecaError>;
