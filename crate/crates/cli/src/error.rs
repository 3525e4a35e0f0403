use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("gate failed ({hypothesis}): {message}")]
    Gate { hypothesis: String, message: String },

    #[error("numerical accuracy: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(ou_coupling::Error),
}

impl CliError {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn gate(hypothesis: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Gate {
            hypothesis: hypothesis.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for failed hypotheses, 4 for
    /// numerical accuracy, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Gate { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }
}

impl From<ou_coupling::Error> for CliError {
    fn from(e: ou_coupling::Error) -> Self {
        use ou_coupling::Error as E;
        match e {
            E::SpectralGate(m) => CliError::gate("bounded semigroup", m),
            E::Precondition(m) => CliError::gate("model precondition", m),
            E::InvalidInput(m) | E::Representation(m) | E::Mode(m) => CliError::config("/model", m),
            E::DimensionMismatch { expected, got } => {
                CliError::config("/model", format!("dimension mismatch: expected {expected}, got {got}"))
            }
            E::Degenerate(m) => CliError::Numerical(m),
            other if other.is_numerical() => CliError::Numerical(other.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
