use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(qnet::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Io(_) | CliError::Model(_) => 1,
        }
    }
}

impl From<qnet::Error> for CliError {
    fn from(e: qnet::Error) -> Self {
        match e {
            qnet::Error::Domain { .. } | qnet::Error::Divergence => CliError::Config(e.to_string()),
            qnet::Error::Format { .. } | qnet::Error::InsufficientStatistics(_) => {
                CliError::Data(e.to_string())
            }
            qnet::Error::Io(io) => CliError::Io(io),
            other => CliError::Model(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
