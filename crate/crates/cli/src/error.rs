use std::path::PathBuf;

use thiserror::Error;

/// Errors of a CLI run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    #[error("usage: {0}")]
    Usage(String),

    /// Unreadable, malformed or incompatible input data (exit 2).
    #[error("data: {0}")]
    Data(String),

    /// A numerical routine failed (exit 3).
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) | CliError::Io { .. } => "data",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<wxverify::Error> for CliError {
    fn from(e: wxverify::Error) -> Self {
        use wxverify::Error as E;
        match e {
            E::Numerical { .. } | E::WeightedMassZero { .. } | E::DegenerateConditional { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("csv: {e}"))
    }
}
