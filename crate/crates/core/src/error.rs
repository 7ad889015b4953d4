use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("negative pseudopotential radicand {radicand:e} at cell ({x}, {y})")]
    Radicand { x: usize, y: usize, radicand: f64 },

    #[error("solver instability at step {step}, cell ({x}, {y}): {reason}")]
    Instability {
        step: u64,
        x: usize,
        y: usize,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("threshold estimation failed: {0}")]
    Estimation(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error("truncated container: expected {expected} payload bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("unsupported container version {0}")]
    Version(u16),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("metadata error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
