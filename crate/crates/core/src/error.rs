use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty reference")]
    EmptyReference,
    #[error("k exceeds candidates (k={k}, candidates={len})")]
    KExceedsCandidates { k: usize, len: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty sequence")]
    EmptySequence,
    #[error("empty cache")]
    EmptyCache,
    #[error("stale range {start}..{end}: not resident as raw rows in the cache")]
    StaleRange { start: usize, end: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported KVD version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload")]
    TruncatedPayload,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors that describe a malformed KVD stream rather than an I/O failure.
    pub fn is_malformed_kvd(&self) -> bool {
        matches!(
            self,
            Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::TruncatedPayload
                | Error::DimensionMismatch(_)
        )
    }
}
