use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not line up.
    Shape(String),
    /// The caller broke an operation's precondition.
    Usage(String),
    /// Malformed input data (record layout, label range, ...).
    Data(String),
    /// A loss or parameter became NaN or infinite during training.
    Divergence(String),
    /// A statistic is undefined for the given input (zero variance, ...).
    Undefined(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Usage(m) => write!(f, "usage error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Divergence(m) => write!(f, "training diverged: {m}"),
            Error::Undefined(m) => write!(f, "undefined: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::Error::Shape(alloc::format!($($arg)*)) };
}
pub(crate) use shape_err;
