use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },

    #[error("degenerate filter: row {row} has norm below {floor:e}")]
    DegenerateFilter { row: usize, floor: f64 },

    #[error("bad magic: expected \"KTSR\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("unsupported rank {0}, expected 4")]
    UnsupportedRank(u8),

    #[error("truncated {what}: need {expected} bytes, found {found}")]
    Truncated {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("payload mismatch: dims imply {expected} bytes, container holds {found}")]
    PayloadMismatch { expected: usize, found: usize },

    #[error("architecture: {0}")]
    Architecture(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure at epoch {epoch}, batch {batch}: {what}")]
    Numerical {
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
