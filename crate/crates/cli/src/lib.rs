//! Batch front-end for the `drosc` toolkit: experiment configs, single runs,
//! sweeps, certificates and transport reports.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

/// Environment variable that overrides `--jobs`.
pub const JOBS_ENV: &str = "DROSC_JOBS";

/// Thread count for sweeps: `DROSC_JOBS` if set and valid, else the flag, else 1.
pub fn resolve_jobs(flag: Option<usize>) -> usize {
    std::env::var(JOBS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .or(flag)
        .unwrap_or(1)
        .max(1)
}
