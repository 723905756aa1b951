use std::path::Path;

use serde_json::json;
use thiserror::Error;
use xolscreen_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Csv(_) => "csv",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.kind(),
        }
    }

    /// "no-contract" when the feasible set of constants is empty, else "error".
    pub fn status(&self) -> &'static str {
        match self {
            CliError::Core(CoreError::NoContract(_)) => "no-contract",
            _ => "error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Core(CoreError::NoContract(_)) => 3,
            _ => 1,
        }
    }

    /// One-line JSON record for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "status": self.status(),
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::Config { key, .. } = self {
            v["key"] = json!(key);
        }
        v.to_string()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e.to_string())
    }
}
