use std::path::PathBuf;

use crate::types::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown class id {class_id} ({context})")]
    UnknownClassId { class_id: ClassId, context: String },

    #[error("semantic probability map covers no stuff class")]
    NoStuffClasses,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("scene spec too large: {0}")]
    SpecTooLarge(String),

    #[error("{}: bad magic at offset {offset}", path.display())]
    BadMagic { path: PathBuf, offset: u64 },

    #[error("{}: unsupported header at offset {offset}: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, offset: u64, reason: String },

    #[error("{}: payload length mismatch at offset {offset}: expected {expected} bytes, found {actual}", path.display())]
    Truncated { path: PathBuf, offset: u64, expected: u64, actual: u64 },

    #[error("{}: non-finite value at offset {offset}", path.display())]
    NonFiniteValue { path: PathBuf, offset: u64 },

    #[error("{}: {reason} (offset {offset})", path.display())]
    InvalidFile { path: PathBuf, offset: u64, reason: String },

    #[error("{}: malformed sidecar: {reason}", path.display())]
    MalformedSidecar { path: PathBuf, reason: String },

    #[error("segment id overflow: {0} segments do not fit in 24 bits")]
    IdOverflow(usize),

    #[error("i/o error on {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("invalid JSON in {}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{}: {reason}", path.display())]
    Png { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
