use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// The variants follow the failure classes surfaced at the command line:
/// configuration and input problems, numerical failures, and file-format or
/// I/O trouble.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input (dimension, shape, label set) violates an operation's
    /// precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A computation produced non-finite values or an undefined quantity.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A file did not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
