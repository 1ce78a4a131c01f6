use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{0}")]
    Shape(String),

    #[error("{op}: length {len} is below the minimum of {min}")]
    Length {
        op: &'static str,
        len: usize,
        min: usize,
    },

    #[error("{what} = {value} is not divisible by {divisor}")]
    Divisibility {
        what: &'static str,
        value: usize,
        divisor: usize,
    },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("unknown variant {0:?} (expected AD, MD, AL, AA, AF, TS or ViT)")]
    UnknownVariant(String),

    #[error("unknown inter-series mechanism {0:?} (expected full, dictionary, lowrank or additive)")]
    UnknownMechanism(String),

    #[error("operation requires the full-attention mechanism, model uses {0}")]
    UnsupportedMechanism(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated file: expected {expected} bytes of {section}, found {found}")]
    Truncated {
        section: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{segment} segment has {len} steps, one window needs {needed}")]
    SegmentTooShort {
        segment: &'static str,
        len: usize,
        needed: usize,
    },

    #[error("insufficient history: need {needed} steps before the forecast origin, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}
