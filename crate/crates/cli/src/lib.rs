//! Library side of the `subset-mle` binary: configuration, the check runner
//! and the subcommands, kept here so integration tests can drive them.

pub mod commands;
pub mod config;
pub mod run;

use std::fmt;

/// Failures mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, reported with the offending field (exit 2).
    Config { field: String, message: String },
    /// Missing or unreadable input (exit 2).
    Input(String),
    /// Checks ran and some failed (exit 1).
    Failed(Vec<String>),
    /// A computation aborted (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input(_) => 2,
            CliError::Failed(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { field, message } => write!(f, "invalid config field `{field}`: {message}"),
            CliError::Input(m) => write!(f, "missing input: {m}"),
            CliError::Failed(names) => write!(f, "failed checks: {}", names.join(", ")),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<subset_mle::Error> for CliError {
    fn from(e: subset_mle::Error) -> Self {
        match e {
            subset_mle::Error::Config { field, message } => CliError::Config { field, message },
            subset_mle::Error::Io(m) => CliError::Input(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
