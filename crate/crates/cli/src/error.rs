//! Error record shared by every command, mapped onto process exit codes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ftsmoe_core::data::DataError;
use ftsmoe_core::eval::EvalError;
use ftsmoe_core::model::ModelError;
use ftsmoe_core::train::{CheckpointError, TrainError};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Usage,
    Data,
    Model,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Model => 4,
        }
    }
}

/// Printed to stderr as one JSON object: `{code, message, context}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: i32,
    pub message: String,
    pub context: BTreeMap<String, String>,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, code: kind.exit_code(), message: message.into(), context: BTreeMap::new() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, message)
    }

    pub fn model(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Model, message)
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.context.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_path(self, path: &Path) -> Self {
        self.with("path", path.display())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::model(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::model(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::EmptyData => CliError::data(e.to_string()),
            TrainError::InvalidConfig(_) => CliError::usage(e.to_string()),
            _ => CliError::model(e.to_string()),
        }
    }
}

/// Wraps an I/O failure on `path` as a data error.
pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("io error: {e}")).with_path(path)
}
