use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Every variant maps onto one of the stable CLI exit codes via
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// Input or design violates a documented precondition.
    #[error("{0}")]
    Validation(String),

    /// Malformed cluster-frame row.
    #[error("line {line}: {message}")]
    Frame { line: usize, message: String },

    /// A numerical routine failed (non-convergence, zero joint probability, ...).
    #[error("{0}")]
    Numeric(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Prefixes the message while keeping the variant (and exit code).
    pub fn context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{prefix}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{prefix}: {m}")),
            Error::Frame { line, message } => Error::Frame { line, message: format!("{prefix}: {message}") },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{prefix}: {e}"))),
            other => other,
        }
    }

    /// 2 validation, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Frame { .. } | Error::Json(_) => 2,
            Error::Numeric(_) => 3,
            Error::Io(_) => 4,
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => 4,
                _ => 2,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
