//! Experiment runner for the `svnet` binary.
//!
//! Each command reads a strict JSON config, writes CSV tables into an output
//! directory and reports whether its checks passed. Every row carries the
//! config hash and master seed.

pub mod commands;
pub mod config;
pub mod output;
pub mod trainer;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::Command;
pub use config::config_hash;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("simulation: {0}")]
    Sim(#[from] svnet::error::SimError),
    #[error("approximation: {0}")]
    Approx(#[from] svnet::error::ApproxError),
    #[error("network: {0}")]
    Net(#[from] svnet::error::NetError),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            _ => 1,
        }
    }
}

/// Result of a command run.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Failed checks, empty when everything passed.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            2
        }
    }
}

/// Parses `config_text` for `command` and runs it into `out`.
pub fn run(command: Command, config_text: &str, out: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out)?;
    commands::dispatch(command, config_text, out)
}

/// Runs with at most `threads` rayon workers.
pub fn run_with_threads(command: Command, config_text: &str, out: &Path, threads: Option<usize>) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(command, config_text, out))
}

/// `SVNET_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("SVNET_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Config(format!("SVNET_THREADS={s:?} is not a worker count"))),
        Err(_) => Ok(None),
    }
}
