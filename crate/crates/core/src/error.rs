use alloc::string::String;

/// Errors raised by every module of the crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("numeric domain error: {0}")]
    NumericDomain(String),
    #[error("state error: {0}")]
    State(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    /// A remote call failed. `attempts` counts the tries already made and
    /// `retryable` says whether another attempt could plausibly succeed.
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport {
        message: String,
        attempts: u32,
        retryable: bool,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
