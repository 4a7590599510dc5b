use thiserror::Error;

/// CLI failure, carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1.
    #[error("i/o error: {0}")]
    Io(String),
    /// Exit 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit 3.
    #[error("malformed KVD: {0}")]
    Kvd(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Kvd(_) => 3,
        }
    }
}

impl From<lagkv::Error> for CliError {
    fn from(e: lagkv::Error) -> Self {
        use lagkv::Error as E;
        match e {
            E::Io(io) => CliError::Io(io.to_string()),
            E::InvalidConfig(_) | E::UnknownStrategy(_) | E::KExceedsCandidates { .. } | E::EmptySequence => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Kvd(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
