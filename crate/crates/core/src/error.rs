use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Malformed-file classes for the binary containers. Each maps to a
/// distinct variant so callers (and tests) can tell them apart.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("truncated data: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("tensor directory inconsistent with config: {0}")]
    ShapeMismatch(String),
    #[error("tensor directory layout invalid: {0}")]
    DirectoryLayout(String),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u32),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid header field: {0}")]
    Header(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },
    #[error("block size mismatch: {left} vs {right}")]
    BlockSizeMismatch { left: usize, right: usize },
    #[error("layout mismatch in {op}: {detail}")]
    LayoutMismatch { op: &'static str, detail: String },
    #[error("shift ({dx}, {dy}) too large for a {height}x{width} image")]
    ShiftTooLarge {
        dx: i32,
        dy: i32,
        height: usize,
        width: usize,
    },
    #[error("patch size {patch} does not divide image {height}x{width}")]
    PatchDivisibility {
        patch: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid accelerator config: {0}")]
    InvalidAccelConfig(String),
    #[error("temperature of layer {layer} must be positive, got {value}")]
    NonPositiveTemperature { layer: usize, value: f64 },
    #[error("head partition invalid: {0}")]
    Partition(String),
    #[error("empty operand in {0}")]
    EmptyOperand(&'static str),
    #[error("no fixtures found in {0}")]
    NoFixtures(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    RawFormat(#[from] FormatError),
}

impl Error {
    pub(crate) fn dims(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a path to a bare format error.
    pub(crate) fn at(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::RawFormat(source) => Error::Format {
                path: path.into(),
                source,
            },
            other => other,
        }
    }

    /// The format error class, if this is one.
    pub fn format_error(&self) -> Option<&FormatError> {
        match self {
            Error::Format { source, .. } | Error::RawFormat(source) => Some(source),
            _ => None,
        }
    }

    /// True for failures caused by reading or decoding files.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Format { .. } | Error::RawFormat(_) | Error::NoFixtures(_)
        )
    }
}
