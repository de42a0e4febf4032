use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the detection pipeline and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what} at optimization iteration {iteration}")]
    NumericFailure { iteration: usize, what: &'static str },

    #[error("frame file not found: {0}")]
    MissingFile(PathBuf),

    #[error("bad frame file header: {0}")]
    BadHeader(String),

    #[error("truncated record at byte {offset}: {detail}")]
    TruncatedRecord { offset: usize, detail: String },

    #[error("non-finite coordinate in frame {frame}, point {point}")]
    NonFiniteValue { frame: u32, point: usize },

    #[error("frames out of order: {0}")]
    OutOfOrder(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
