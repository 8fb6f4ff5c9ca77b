use alloc::vec::Vec;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or model had the wrong size.
    DimensionMismatch { expected: usize, found: usize },
    /// A transition row is not a probability vector.
    InvalidRow { state: usize, action: usize, sum: f64 },
    /// A transition row has a negative or non-finite entry.
    InvalidEntry { state: usize, action: usize, next: usize, value: f64 },
    /// A reward outside `[0, 1]`.
    RewardOutOfRange { state: usize, action: usize, value: f64 },
    /// A state or action index past the end.
    IndexOutOfRange { what: &'static str, index: usize, bound: usize },
    /// A scalar parameter outside its admissible range.
    InvalidParameter { name: &'static str, value: f64 },
    /// Value iteration did not settle. `per_state_gain` holds the last
    /// one-step increments, which differ across states when the optimal gain
    /// is not constant.
    NonConvergence { iterations: usize, per_state_gain: Vec<f64> },
    /// Policy enumeration requested for a model with too many policies.
    EnumerationTooLarge { policies: f64, limit: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidRow { state, action, sum } => write!(
                f,
                "transition row (s={state}, a={action}) sums to {sum}, expected 1"
            ),
            Error::InvalidEntry { state, action, next, value } => write!(
                f,
                "transition row (s={state}, a={action}) has invalid entry {value} at next state {next}"
            ),
            Error::RewardOutOfRange { state, action, value } => {
                write!(f, "reward r(s={state}, a={action}) = {value} is outside [0, 1]")
            }
            Error::IndexOutOfRange { what, index, bound } => {
                write!(f, "{what} index {index} out of range (< {bound} required)")
            }
            Error::InvalidParameter { name, value } => {
                write!(f, "parameter {name} = {value} is out of range")
            }
            Error::NonConvergence { iterations, per_state_gain } => write!(
                f,
                "value iteration did not converge after {iterations} iterations \
                 (non-constant gain suspected; per-state gain estimates {per_state_gain:?})"
            ),
            Error::EnumerationTooLarge { policies, limit } => write!(
                f,
                "{policies} deterministic policies exceed the enumeration limit of {limit}"
            ),
        }
    }
}

impl core::error::Error for Error {}
