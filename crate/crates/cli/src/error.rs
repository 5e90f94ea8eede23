use std::fmt;

use shiftrisk::estimator::EstimatorError;
use shiftrisk::io::IoError;
use shiftrisk::oracle::OracleError;
use shiftrisk::risk::RiskError;
use shiftrisk::semgen::SemError;

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Oracle and estimator disagree (1).
    Mismatch(String),
    /// Bad spec, flags or data content (2).
    Config(String),
    /// Estimation produced no usable candidate (3).
    Degenerate(String),
    /// Files could not be read or written (4).
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Mismatch(_) => 1,
            CliError::Config(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Mismatch(m) | CliError::Config(m) | CliError::Degenerate(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<SemError> for CliError {
    fn from(e: SemError) -> Self {
        match e {
            SemError::Read { .. } => CliError::Io(e.to_string()),
            SemError::SingularD { .. } | SemError::FixedPointDivergence { .. } => CliError::Degenerate(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::InvalidConfig(_) | EstimatorError::Risk(_) => CliError::Config(e.to_string()),
            _ => CliError::Degenerate(e.to_string()),
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<shiftrisk::moments::MomentsError> for CliError {
    fn from(e: shiftrisk::moments::MomentsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
