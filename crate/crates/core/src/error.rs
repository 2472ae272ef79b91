use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported bit depth: maxval {0} (only 8-bit, maxval 255, is accepted)")]
    UnsupportedBitDepth(u32),

    #[error("truncated payload: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid label character {0:?}")]
    InvalidLabelChar(char),

    #[error("label length mismatch: expected {expected}, found {found}")]
    LabelLengthMismatch { expected: usize, found: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty grid")]
    EmptyGrid,

    #[error("missing annotations for: {}", .0.join(", "))]
    MissingAnnotations(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("triangle cap exceeded: more than {0} triangles")]
    TriangleCap(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line: 1 usage, 2 I/O, 3 data/format, 4 resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::TriangleCap(_) => 4,
            Error::InvalidParam(_) | Error::EmptyGrid => 1,
            _ => 3,
        }
    }
}
