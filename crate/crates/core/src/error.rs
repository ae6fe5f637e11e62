use std::path::PathBuf;

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration file problems: unknown keys, missing keys, bad values.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset ingestion problems, always naming the offending file or row.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// A loss or activation became non-finite during training.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Checkpoint files that cannot be parsed or do not match the model.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
