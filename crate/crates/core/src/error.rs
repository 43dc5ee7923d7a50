use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument fell outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// The segment pair cannot host a feasible allocation.
    #[error("infeasible segment pair (j={j}, k={k}): {reason}")]
    InfeasibleSegment { j: usize, k: usize, reason: String },

    #[error("invalid energy-harvesting curve: {0}")]
    InvalidCurve(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config error at line {line}, key `{key}`: {reason}")]
    Config { line: usize, key: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
