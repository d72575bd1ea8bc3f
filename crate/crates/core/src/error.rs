use std::io;

use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index error: {0}")]
    Index(String),

    #[error("argument error: {0}")]
    Argument(String),

    /// The input is outside the domain of the operation (zero norm, constant tensor, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("training diverged ({0}); try a lower learning rate")]
    Diverged(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
