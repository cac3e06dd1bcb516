use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScanError {
    /// Input outside the mathematical domain of an operation (empty cluster, empty stream, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },
    /// Enumeration or allocation size guard exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// Malformed or incomplete configuration; `key` names the offending entry.
    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScanError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        ScanError::Parameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn domain(reason: impl Into<String>) -> Self {
        ScanError::Domain(reason.into())
    }
}

pub type Result<T, E = ScanError> = std::result::Result<T, E>;
