//! Error type shared by the core numeric modules.

use core::fmt;

/// Alias for results produced by this crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Invalid-input conditions surfaced by the numeric operations.
///
/// All operations in this crate are pure; an `Error` always means the caller
/// handed in data that violates a documented precondition, never an internal
/// failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A rollout group or record list was empty where at least one element
    /// is required.
    EmptyInput(&'static str),
    /// A token count that must be strictly positive was zero.
    NonPositiveLength,
    /// A target or budget of zero would make the efficiency reward undefined.
    ZeroTarget,
    /// A batch mean fell outside its declared reward range by more than the
    /// clamping tolerance, which indicates a bug upstream.
    MeanOutOfRange { mu: f64, min: f64, max: f64 },
    /// Two containers that must be aligned had different lengths.
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    /// An index referenced a prompt or bin that does not exist.
    IndexOutOfRange { index: usize, len: usize },
    /// Rank correlation is undefined when one of the vectors is constant.
    ConstantVector,
    /// A configuration value violated its invariant.
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::NonPositiveLength => write!(f, "token lengths must be strictly positive"),
            Error::ZeroTarget => write!(f, "target length / budget must be positive"),
            Error::MeanOutOfRange { mu, min, max } => {
                write!(f, "batch mean {mu} outside reward range [{min}, {max}]")
            }
            Error::LengthMismatch { what, left, right } => {
                write!(f, "length mismatch in {what}: {left} vs {right}")
            }
            Error::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range for length {len}")
            }
            Error::ConstantVector => {
                write!(f, "rank correlation undefined for a constant vector")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
        }
    }
}

impl core::error::Error for Error {}
