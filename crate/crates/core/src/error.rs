use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not line up for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A scalar or structural argument is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A caller-supplied component broke its contract (e.g. wrong output shape).
    #[error("contract error: {0}")]
    Contract(String),

    /// Temporal extent exceeds the positional table of the motion module.
    #[error("capacity error: temporal extent {frames} exceeds positional capacity {capacity}")]
    Capacity { frames: usize, capacity: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    /// Non-finite loss or gradient during training.
    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("mask provider error: {0}")]
    Provider(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
