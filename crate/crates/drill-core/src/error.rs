use alloc::string::String;
use core::fmt;

/// Error type shared by every module in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes incompatible for an operation. Carries both shapes.
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// Index (label id, row, ...) out of range.
    Index { what: &'static str, index: usize, bound: usize },
    /// Invalid configuration value; the message names the violated constraint.
    Config(String),
    /// An operation produced a NaN or infinity.
    NonFinite { op: &'static str },
    /// API misuse, e.g. backward invoked twice on one tape.
    Usage(&'static str),
    /// Malformed or empty input data.
    Data(String),
    /// A gradient-check precondition failed (non-deterministic objective).
    Oracle(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => write!(
                f,
                "shape mismatch in {op}: {}x{} vs {}x{}",
                lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::Index { what, index, bound } => {
                write!(f, "{what} {index} out of range (bound {bound})")
            }
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Oracle(msg) => write!(f, "oracle precondition: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
