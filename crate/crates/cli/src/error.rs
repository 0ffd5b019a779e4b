use geotrack_core::GeoError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("numerical failure: {0}")]
    Numerical(GeoError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) | CliError::Numerical(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Data(_) => 4,
        }
    }

    pub fn io(what: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{what}: {err}"))
    }
}

impl From<GeoError> for CliError {
    /// Errors that stem from the supplied parameters are configuration errors.
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::Config(msg) => CliError::Config(msg),
            GeoError::Domain(_) | GeoError::Contract(_) | GeoError::InfeasiblePeriod { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
