use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

/// Problems reading a wide-format curve file.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoadError {
    #[error("file is empty")]
    EmptyFile,
    /// `row` is the one-based line number in the file.
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },
    #[error("grid abscissae in the first row are not strictly increasing")]
    NonMonotoneGrid,
    #[error("row {row}, column {col}: cannot parse '{text}' as a number")]
    Parse { row: usize, col: usize, text: String },
    #[error("file has a grid row but no observations")]
    NoObservations,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fmfpca_core::Error),
    #[error("{path}: {source}")]
    Load { path: PathBuf, source: LoadError },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    /// Short machine-readable name, e.g. `MissingCriticalValues` or `RaggedRows`.
    pub fn kind(&self) -> String {
        match self {
            CliError::Core(e) => variant_name(&format!("{e:?}")),
            CliError::Load { source, .. } => variant_name(&format!("{source:?}")),
            CliError::Io { .. } => "Io".into(),
            CliError::Config(_) => "InvalidConfig".into(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Load { source: LoadError::RaggedRows { row, .. }, .. } = self {
            err["row"] = json!(row);
        }
        json!({ "error": err })
    }
}

fn variant_name(debug: &str) -> String {
    debug
        .split(|c: char| !c.is_alphanumeric() && c != '_')
        .next()
        .unwrap_or("Error")
        .to_string()
}
