use alloc::string::String;
use core::fmt;

/// Errors produced by the computational layers.
///
/// Shape and argument problems are programming errors at call sites and are
/// reported eagerly instead of panicking so the CLI can map them to exit
/// codes. Numeric failures (divergence, non-finite values) get their own
/// variant because callers treat them differently from bad input.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not line up for the requested operation.
    ShapeMismatch(String),
    /// An argument violates a documented precondition.
    InvalidArgument(String),
    /// A NaN or infinity appeared where a finite value is required.
    NonFinite(String),
    /// Input data violates a corpus or label invariant.
    Data(String),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
    pub fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(m) => write!(f, "shape mismatch: {m}"),
            Error::InvalidArgument(m) => write!(f, "invalid argument: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
