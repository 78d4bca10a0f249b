use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parameterization of chart {chart} failed: {msg}")]
    Parameterization { chart: usize, msg: String },

    #[error("atlas packing failed: {0}")]
    Packing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation error at `{field}`: {msg}")]
    Validation { field: String, msg: String },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            msg: msg.into(),
        }
    }
}
