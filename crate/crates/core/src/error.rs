use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    /// The fault site does not exist in the kernel trace.
    #[error("invalid fault site: {0}")]
    InvalidSite(String),

    #[error("no injectable sites for the requested register classes")]
    NoSites,
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid_site(msg: impl Into<String>) -> Self {
        Error::InvalidSite(msg.into())
    }
}
