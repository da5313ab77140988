//! Crate-wide error type.
//!
//! Every failure is categorized so that callers (and the CLI exit-code
//! mapping) can distinguish data-validation problems from numeric ones.

use std::path::Path;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: dimension mismatch in {field}: {detail}")]
    DimensionMismatch {
        context: String,
        field: &'static str,
        detail: String,
    },

    #[error("{context}: non-finite value in {field} at row {row}")]
    NonFinite {
        context: String,
        field: &'static str,
        row: usize,
    },

    #[error("{context}: posteriorgram row {row} sums to {sum} (expected 1 within {tol})")]
    RowSum {
        context: String,
        row: usize,
        sum: f64,
        tol: f64,
    },

    #[error("{context}: posteriorgram entry {value} at row {row} outside [0, 1]")]
    PosteriorRange {
        context: String,
        row: usize,
        value: f64,
    },

    #[error("{context}: alignment segment {segment}: {detail}")]
    Alignment {
        context: String,
        segment: usize,
        detail: String,
    },

    #[error("unknown phone symbol `{symbol}` ({context})")]
    UnknownPhone { symbol: String, context: String },

    #[error("empty or missing pool for phone `{symbol}`")]
    EmptyPool { symbol: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("constant vector: {0}")]
    ConstantVector(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the CLI: 3 for data/validation problems,
    /// 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConstantVector(_) | Error::Numeric(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
