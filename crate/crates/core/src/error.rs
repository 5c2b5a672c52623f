use std::path::PathBuf;

/// Errors produced by the watermarking toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structural mismatch between a key, a table, or their inputs.
    #[error("schema error: {0}")]
    Schema(String),

    /// A numeric argument outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty table")]
    EmptyTable,

    /// Malformed CSV input.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A structured document that parsed but failed validation.
    #[error("invalid field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("unsupported document version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

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
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
