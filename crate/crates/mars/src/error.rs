use std::fmt;
use std::io;
use std::path::Path;

use mars_core::evaluator::{EvalError, RubricShapeError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

impl FileError {
    pub fn io(path: &Path, source: io::Error) -> FileError {
        FileError::Io { path: path.display().to_string(), source }
    }

    pub fn invalid(location: impl Into<String>, message: impl fmt::Display) -> FileError {
        FileError::Invalid { location: location.into(), message: message.to_string() }
    }
}

/// A configuration problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
        ConfigError { field: field.into(), message: message.to_string() }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: unsupported schema {schema} version {version}")]
    Version { path: String, schema: String, version: u64 },
    #[error("{path}: trace is incomplete ({reason})")]
    Incomplete { path: String, reason: String },
    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },
}

impl TraceError {
    pub(crate) fn format(path: &str, line: usize, message: impl fmt::Display) -> TraceError {
        TraceError::Format { path: path.to_string(), line, message: message.to_string() }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Rubric { path: String, source: RubricShapeError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
}
