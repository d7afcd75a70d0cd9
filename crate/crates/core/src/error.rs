use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}, row {row}: {message}")]
    Manifest {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("stream {stream_id}: {message}")]
    Stream { stream_id: String, message: String },

    #[error("image decode failed for {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training data contains a single class ({0}); both ND and SD examples are required")]
    SingleClass(&'static str),

    #[error("shape mismatch at layer {layer} ({kind}): {message}")]
    Shape {
        layer: usize,
        kind: &'static str,
        message: String,
    },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("page index {index} out of range for stream of {len} pages")]
    PageOutOfRange { index: usize, len: usize },

    #[error("malformed {format} data: {message}")]
    Format {
        format: &'static str,
        message: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            format,
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
