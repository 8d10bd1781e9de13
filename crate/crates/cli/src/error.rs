use thiserror::Error;

/// Driver failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("run aborted at round {round}: {source}")]
    Runtime {
        round: usize,
        #[source]
        source: odwda_core::Error,
    },

    #[error("{0}")]
    Analysis(odwda_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    pub(crate) fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
