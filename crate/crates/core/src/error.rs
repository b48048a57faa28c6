use core::fmt;

use crate::ozht::FailureReason;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Error {
    /// A size, index or key argument is outside its allowed domain.
    InvalidParameter(&'static str),
    /// The hash family epoch counter cannot be advanced any further.
    CounterExhausted,
    /// A write would push the number of live keys above the ORAM capacity.
    CapacityExceeded,
    /// An oblivious build could not place every real element.
    BuildFailed(FailureReason),
    /// A previous rebuild failed and the ORAM no longer holds all elements.
    Poisoned,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::CounterExhausted => f.write_str("hash family epoch counter exhausted"),
            Error::CapacityExceeded => f.write_str("ORAM capacity exceeded"),
            Error::BuildFailed(reason) => write!(f, "oblivious build failed: {reason}"),
            Error::Poisoned => f.write_str("ORAM is unusable after a failed rebuild"),
        }
    }
}

impl core::error::Error for Error {}
