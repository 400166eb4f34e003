use num_bigint::BigUint;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variant names double as the wire/CLI error codes, see [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("value is not invertible: gcd = {0}")]
    NotInvertible(BigUint),
    #[error("no prime found within {0} attempts")]
    Timeout(usize),
    #[error("invalid field parameters: {0}")]
    InvalidParams(String),
    #[error("invalid degree: {0}")]
    InvalidDegree(String),
    #[error("point {0:x} outside the admissible range")]
    PointOutOfRange(BigUint),
    #[error("point {0:x} is not a quadratic residue")]
    PointNotResidue(BigUint),
    #[error("point {0:x} already assigned")]
    DuplicatePoint(BigUint),
    #[error("user {0:?} already registered")]
    DuplicateUser(String),
    #[error("no free public points remain")]
    RegistryFull,
    #[error("issued material failed the consistency check")]
    ConsistencyCheckFailed,
    #[error("sender and receiver are the same party")]
    SelfChannel,
    #[error("authentication failed")]
    AuthFailed,
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("server has no master secret")]
    ServerNotInitialized,
    #[error("channel denied by policy")]
    PolicyDenied,
    #[error("authentication tag mismatch")]
    TagMismatch,
    #[error("sequence number {got} not above {last}")]
    ReplayDetected { last: u64, got: u64 },
    #[error("envelope orientation does not match the stream context")]
    DirectionMismatch,
    #[error("{0}-bit modulus exceeds the brute-force cap")]
    ModulusTooLarge(u32),
    #[error("discrete logarithm not found")]
    NotFound,
    #[error("need {needed} shares, have {have}")]
    Insufficient { needed: usize, have: usize },
    #[error("operation cancelled")]
    Cancelled,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable error name used on the wire and by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotInvertible(_) => "NotInvertible",
            Error::Timeout(_) => "Timeout",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidDegree(_) => "InvalidDegree",
            Error::PointOutOfRange(_) => "PointOutOfRange",
            Error::PointNotResidue(_) => "PointNotResidue",
            Error::DuplicatePoint(_) => "DuplicatePoint",
            Error::DuplicateUser(_) => "DuplicateUser",
            Error::RegistryFull => "RegistryFull",
            Error::ConsistencyCheckFailed => "ConsistencyCheckFailed",
            Error::SelfChannel => "SelfChannel",
            Error::AuthFailed => "AuthFailed",
            Error::UnknownUser(_) => "UnknownUser",
            Error::ServerNotInitialized => "ServerNotInitialized",
            Error::PolicyDenied => "PolicyDenied",
            Error::TagMismatch => "TagMismatch",
            Error::ReplayDetected { .. } => "ReplayDetected",
            Error::DirectionMismatch => "DirectionMismatch",
            Error::ModulusTooLarge(_) => "ModulusTooLarge",
            Error::NotFound => "NotFound",
            Error::Insufficient { .. } => "Insufficient",
            Error::Cancelled => "Cancelled",
            Error::Malformed(_) => "Malformed",
            Error::Protocol(_) => "Protocol",
            Error::Io(_) => "Io",
        }
    }

    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
