use std::process::ExitCode;

use gesteval::analysis::{AnalysisError, ErrorClass};
use gesteval::metrics::MetricsError;
use gesteval::model::ModelError;
use gesteval::simulate::SimulationError;
use gesteval::study::StudyError;
use thiserror::Error;

/// Failure classes map onto exit codes 2, 3 and 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Computation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 2,
            CliError::Computation(_) => 3,
            CliError::Io(_) => 4,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "invalid input",
            CliError::Computation(_) => "cannot compute",
            CliError::Io(_) => "i/o error",
        }
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Computation(m) => CliError::Computation(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e.class() {
            ErrorClass::Validation => CliError::Validation(e.to_string()),
            ErrorClass::Computation => CliError::Computation(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Shortfall { .. } | StudyError::PoolExhausted { .. } => CliError::Computation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Study(s) => s.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        use MetricsError::*;
        match e {
            Io(m) => CliError::Io(m),
            Parse(_) | DimensionMismatch { .. } | ShapeMismatch(_) | NonFinite(_) | InvalidSpan { .. }
            | NonPositive { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Computation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}
