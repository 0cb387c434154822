use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error("{source}")]
    Core {
        module: &'static str,
        source: cqreg::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn module(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Data(_) => "data",
            CliError::Core { module, .. } => module,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "module": self.module(), "message": self.to_string() } })
    }
}

/// Tags a library error with the module that raised it.
pub fn core(module: &'static str) -> impl Fn(cqreg::Error) -> CliError {
    move |source| CliError::Core { module, source }
}

pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
