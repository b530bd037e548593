use std::io;

use thiserror::Error;

/// Exit code for bad models, configurations and files.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERIC: i32 = 3;
/// Exit code for environment failures (output stream, thread pool).
pub const EXIT_ENVIRONMENT: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Core(#[from] qnuis_core::Error),

    #[error("cannot read {path}: {source}")]
    Read { path: String, source: io::Error },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("cannot write output: {0}")]
    Write(#[from] io::Error),

    #[error("cannot start the thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_input_error() => EXIT_NUMERIC,
            CliError::Write(_) | CliError::Threads(_) => EXIT_ENVIRONMENT,
            _ => EXIT_INPUT,
        }
    }
}

pub fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

pub type CliResult<T> = Result<T, CliError>;
