use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Text that should hold a rational, polynomial, word or config did not parse.
    #[error("parse error: {0}")]
    Parse(String),
    /// An exact path was asked for a parameter whose square root is irrational.
    #[error("{0} is not the square of a rational; use the floating-point Monte Carlo path instead")]
    NotSquare(String),
    /// The input does not carry enough resolution for a trustworthy numerical answer.
    #[error("numerical precision: {0}")]
    Precision(String),
    /// A hypothesis of the underlying lemma is violated by the input.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// An identity the engine is supposed to certify came out false.
    #[error("check failed: {0}")]
    Check(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
