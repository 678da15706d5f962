use std::path::Path;

use thiserror::Error;

use crate::config::ValidationReport;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ValidationReport),
    #[error("{0}")]
    Usage(String),
    #[error("missing {artifact}; run `tdm {producer}` first")]
    MissingArtifact { artifact: String, producer: &'static str },
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    /// 1 for bad configs, arguments and missing or stale upstream
    /// artifacts; 2 for everything that fails while running a stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 2,
            _ => 1,
        }
    }
}
