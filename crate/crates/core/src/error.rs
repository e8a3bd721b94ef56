use thiserror::Error;

/// Errors raised by the numeric modules.
///
/// The variants are grouped so the command-line layer can map them onto exit
/// codes: `Usage` is a caller mistake, `Structural`, `Domain`, `Numeric` and
/// `Overflow` are failures of the computation itself.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {message} (residual {residual:e})")]
    Numeric { message: String, residual: f64 },
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl LabError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        LabError::Usage(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        LabError::Parse {
            line,
            message: msg.into(),
        }
    }

    /// True for errors caused by malformed input rather than by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(self, LabError::Usage(_) | LabError::Parse { .. })
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
