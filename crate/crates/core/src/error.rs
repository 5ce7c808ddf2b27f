use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("document contains no elements")]
    EmptyDocument,

    #[error("invalid node id {0}")]
    InvalidNode(usize),

    #[error("box annotation path {0:?} does not name an element")]
    BadBoxPath(Vec<usize>),

    #[error("sequence length {len} exceeds the maximum of {max}")]
    SegmentTooLong { len: usize, max: usize },

    #[error("invalid window: window={window}, stride={stride}")]
    InvalidWindow { window: usize, stride: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sample has no content tokens")]
    EmptySample,

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("finite-difference epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("checksum mismatch for shard {0}")]
    Checksum(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("no records were produced")]
    NoRecords,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool: 1 usage, 2 data, 3 numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidWindow { .. } | Error::InvalidEpsilon(_) => 1,
            Error::Numerics(_) => 3,
            _ => 2,
        }
    }
}
