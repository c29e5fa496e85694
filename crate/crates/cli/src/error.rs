use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Core(#[from] quadrbm::Error),

    #[error(transparent)]
    Calo(#[from] quadrbm_calo::CaloError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 failed verification or run, 2 usage or configuration, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(e) if e.is_backend() => 3,
            CliError::Core(quadrbm::Error::InvalidParameter(_)) => 2,
            CliError::Calo(
                quadrbm_calo::CaloError::InvalidParameter(_)
                | quadrbm_calo::CaloError::Overflow { .. }
                | quadrbm_calo::CaloError::OutOfRange { .. },
            ) => 2,
            _ => 1,
        }
    }
}
