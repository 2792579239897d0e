use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library.
///
/// `Shape` and `Contract` are programmer-facing precondition failures,
/// `Format`/`Parse`/`Io` come from external files, and `Numeric` marks a
/// computation that left the finite/convergent regime.
#[derive(Debug, Error)]
pub enum SclError {
    #[error("{op}: dimension mismatch {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SclError {
    pub fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        SclError::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        SclError::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        SclError::Numeric(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        SclError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        SclError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SclError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SclError>;
