use std::path::PathBuf;

use crate::types::CameraRole;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in `{field}` at index {index}")]
    NonFiniteValue { field: String, index: usize },

    #[error("invalid value in `{field}` at index {index}: {reason}")]
    InvalidValue {
        field: String,
        index: usize,
        reason: &'static str,
    },

    #[error("missing {0} camera payload")]
    MissingCamera(CameraRole),

    #[error("{0} camera is missing its attention vector during warmup")]
    MissingAttention(CameraRole),

    #[error("depth map {height}x{width} is not divisible by patch grid {grid_h}x{grid_w}")]
    IndivisibleGrid {
        height: usize,
        width: usize,
        grid_h: usize,
        grid_w: usize,
    },

    #[error("attention length {found} does not match patch count {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("negative attention {value} at patch {index}")]
    NegativeAttention { index: usize, value: f32 },

    #[error("attention warmup already holds {0} frames")]
    WarmupComplete(usize),

    #[error("attention warmup incomplete: {seen} of {needed} frames")]
    WarmupIncomplete { seen: usize, needed: usize },

    #[error("patch index {index} out of range for {patches} patches")]
    IndexOutOfRange { index: usize, patches: usize },

    #[error("region of {0} tokens exceeds the oracle limit")]
    TooLarge(usize),

    #[error("merge plan frozen at frame {frozen_at} predates initialization at frame {initialized_at}")]
    PlanStale { frozen_at: u64, initialized_at: u64 },

    #[error("action chunk is empty")]
    EmptyChunk,

    #[error("frame {found} does not follow frame {previous}")]
    NonMonotonicFrame { previous: u64, found: u64 },

    #[error("frame {frame}: {inner}")]
    AtFrame { frame: u64, inner: Box<Error> },

    #[error("bad config key `{key}`: {reason}")]
    BadConfig { key: String, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("malformed {what}: {reason}")]
    Malformed { what: String, reason: String },

    #[error("{}: {cause}", path.display())]
    Io { path: PathBuf, cause: std::io::Error },
}

impl Error {
    pub(crate) fn at_frame(self, frame: u64) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                inner: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    pub(crate) fn bad_config(key: &str, reason: impl Into<String>) -> Self {
        Error::BadConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// True for filesystem failures, as opposed to input validation failures.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::AtFrame { inner, .. } => inner.is_io(),
            _ => false,
        }
    }
}
