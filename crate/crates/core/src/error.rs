use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot parse network name {name:?}: unexpected token {token:?} ({reason})")]
    NetworkName {
        name: String,
        token: String,
        reason: &'static str,
    },

    #[error("model file: {0}")]
    Model(#[from] ModelDecodeError),

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageDecodeError,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("incomplete result grid: missing {0}")]
    IncompleteGrid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelDecodeError {
    #[error("bad magic bytes {0:?}, expected \"SONN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("stream truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after model payload")]
    TrailingBytes(usize),
    #[error("invalid header: {0}")]
    Header(String),
}

#[derive(Debug, Error)]
pub enum ImageDecodeError {
    #[error("unknown magic number {0:?}")]
    UnknownMagic(String),
    #[error("unsupported bit depth: maxval {0} (only 255 is supported)")]
    UnsupportedDepth(u32),
    #[error("pixel payload truncated: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("sample value {0} exceeds maxval")]
    SampleRange(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
