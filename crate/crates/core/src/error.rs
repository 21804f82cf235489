use thiserror::Error;

use crate::sets::SubsetMask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ground-set size {0} outside 1..=63")]
    GroundSetSize(u32),

    #[error("mask {mask} has elements outside the ground set {ground}")]
    NotContained {
        mask: SubsetMask,
        ground: SubsetMask,
    },

    #[error("cannot parse subset mask {0:?}")]
    ParseMask(String),

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("distributions disagree on ground-set size ({0} vs {1})")]
    SizeMismatch(u32, u32),

    #[error("restriction left zero surviving mass")]
    ZeroMass,

    #[error("exact enumeration over {0} elements exceeds the 24-element cap")]
    TooLarge(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eps {eps} outside the open interval (2^-{n}, 1/2)")]
    EpsOutOfRange { eps: f64, n: u32 },

    #[error("disjointness probability {prob} is below eps {eps}")]
    BelowThreshold { prob: f64, eps: f64 },

    #[error("truncation removed all mass (threshold {0} bits)")]
    EverythingTruncated(f64),

    #[error("reduced error parameter {eps_prime:e} is at most 2^-{n}; need n >= {min_n}")]
    ReducedEpsTooSmall { eps_prime: f64, n: u32, min_n: u32 },

    #[error("exact evaluation needs {pairs} support pairs, above the guard of {guard}; use sampled mode")]
    GuardViolation { pairs: u128, guard: u128 },

    #[error("io: {0}")]
    Io(String),

    #[error("json: {0}")]
    Json(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
