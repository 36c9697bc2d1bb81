use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by dump IO, validation and the analysis modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported dump format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("{file}: byte length {actual} does not match declared shape ({expected} bytes)")]
    ByteLength {
        file: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("shape mismatch in {what}: expected {expected} values, found {found}")]
    Shape {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {tensor} of sample {sample} at flat index {index}")]
    NonFinite {
        sample: String,
        tensor: &'static str,
        index: usize,
    },

    #[error(
        "simplex violation in sample {sample}, layer {layer}, head {head}, row {row}: {detail}"
    )]
    Simplex {
        sample: String,
        layer: usize,
        head: usize,
        row: usize,
        detail: String,
    },

    #[error("causal mask violation in sample {sample}, layer {layer}, head {head}: a[{row}][{col}] = {value}")]
    CausalMask {
        sample: String,
        layer: usize,
        head: usize,
        row: usize,
        col: usize,
        value: f32,
    },

    #[error("capability missing: {0} block not present in dump")]
    Capability(&'static str),

    #[error("invalid synthetic spec: {0}")]
    Synth(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input too large: {0}")]
    TooLarge(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that mean a dump on disk is missing, malformed or
    /// violates a format invariant.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Json { .. }
                | Error::Version { .. }
                | Error::Manifest(_)
                | Error::ByteLength { .. }
                | Error::Shape { .. }
                | Error::NonFinite { .. }
                | Error::Simplex { .. }
                | Error::CausalMask { .. }
        )
    }
}
