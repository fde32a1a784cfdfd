use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    SyncNotFound(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Format(_) => 3,
            CliError::SyncNotFound(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<fanmodem::Error> for CliError {
    fn from(e: fanmodem::Error) -> Self {
        use fanmodem::Error as E;
        match e {
            E::Io { .. } => CliError::Io(e.to_string()),
            E::Format { .. } | E::UnsupportedFormat { .. } => CliError::Format(e.to_string()),
            E::Config(_) | E::Domain(_) => CliError::Config(e.to_string()),
        }
    }
}
