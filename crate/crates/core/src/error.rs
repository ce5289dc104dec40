use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or vector did not have the dimensions an operation requires.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// NaN or infinity in a loss, activation or gradient.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated tensor table: {0}")]
    Truncated(String),

    #[error("configuration mismatch in field `{field}`: file has {found}, expected {expected}")]
    ConfigMismatch {
        field: String,
        found: String,
        expected: String,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
