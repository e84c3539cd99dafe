use thiserror::Error;

/// Errors produced by the identification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Domain { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} too short: need at least {min} samples, got {got}")]
    TooShort {
        what: &'static str,
        min: usize,
        got: usize,
    },

    #[error("csv parse error at row {row}, column `{column}`: {reason}")]
    Parse {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("missing csv column `{0}`")]
    MissingColumn(String),

    #[error("point is infeasible: max violation {violation:e} exceeds tolerance {tol:e}")]
    Infeasible { violation: f64, tol: f64 },

    #[error("lambda selection failed after {rounds} threshold rounds: {reason}")]
    Selection {
        rounds: usize,
        reason: String,
        /// The swept path, for manual inspection.
        path: Box<crate::lambda_select::LambdaPath>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Length {
            what,
            expected,
            got,
        })
    }
}
