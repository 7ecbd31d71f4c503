use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DriverError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(homps_core::Error),
    #[error("{failed} of {total} trajectories failed, above the allowed fraction {limit}")]
    TooManyFailures { failed: u64, total: usize, limit: f64 },
    #[error("{0}")]
    Check(String),
}

impl DriverError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Parse { .. } | DriverError::Config { .. } => 2,
            DriverError::Numerical(_) | DriverError::TooManyFailures { .. } | DriverError::Check(_) => 3,
            DriverError::Io { .. } => 1,
        }
    }
}

/// Core errors raised while setting up a run are configuration problems when
/// they reject a parameter, numerical failures otherwise.
pub(crate) fn setup_error(field: &str, e: homps_core::Error) -> DriverError {
    use homps_core::Error as E;
    match e {
        E::InvalidParameter(m) => DriverError::config(field, m),
        E::UnsupportedDecomposition(m) => DriverError::config(field, m),
        E::DimensionMismatch { detail, .. } => DriverError::config(field, detail),
        E::FitTolerance { .. } => DriverError::config(field, e.to_string()),
        other => DriverError::Numerical(other),
    }
}
