use thiserror::Error;

/// Crate-wide error type.
///
/// The variants map onto the CLI exit codes: `Config` → 2, `Numeric` → 3,
/// `Protocol` → 4, everything else → 1.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad dimensions, invalid hyperparameters, malformed config files.
    #[error("config error: {0}")]
    Config(String),
    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// API misuse (e.g. replaying a spent gradient tape).
    #[error("usage error: {0}")]
    Usage(String),
    /// Inputs outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Experiment-protocol violations (overlapping cohorts, seed mismatch).
    #[error("protocol violation: {0}")]
    Protocol(String),
    /// Malformed artifact files (checkpoints, traces, logs).
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 3,
            Error::Protocol(_) => 4,
            _ => 1,
        }
    }
}
