use alloc::string::String;
use core::fmt;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two states (or a state and an operator) live in different bases.
    BasisMismatch,
    /// Vector lengths disagree.
    LengthMismatch { expected: usize, found: usize },
    /// Grid construction failed.
    InvalidGrid(String),
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    /// Target specification is malformed.
    InvalidTarget(String),
    /// An iterative solver stopped before reaching its tolerance.
    NotConverged { iterations: usize, residual: f64 },
    /// A non-finite number appeared while propagating.
    NonFinite { step: usize },
    /// The trajectory store would exceed the configured memory cap.
    MemoryCap { required: u64, cap: u64 },
    /// Too many iterations decreased the functional.
    MonotonicityAbort { violations: usize, iterations: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::BasisMismatch => write!(f, "basis mismatch between operands"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidTarget(msg) => write!(f, "invalid target: {msg}"),
            Error::NotConverged {
                iterations,
                residual,
            } => write!(
                f,
                "not converged after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::NonFinite { step } => write!(f, "non-finite amplitude detected at step {step}"),
            Error::MemoryCap { required, cap } => write!(
                f,
                "trajectory storage needs {required} bytes, above the cap of {cap} bytes"
            ),
            Error::MonotonicityAbort {
                violations,
                iterations,
            } => write!(
                f,
                "{violations} of {iterations} iterations decreased the functional; propagation is too inaccurate"
            ),
        }
    }
}

impl core::error::Error for Error {}
