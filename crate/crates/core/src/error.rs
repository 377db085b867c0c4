use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor extents do not agree with what an operation expects.
    #[error("{op}: dimension error: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A configuration value is inconsistent or unsupported.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A size limit would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A caller-side precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file exists but its contents are malformed.
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }
}
