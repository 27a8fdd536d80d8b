//! Pipeline orchestration behind the `segland` executable.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod synth;

pub use error::{CliError, Result};
pub use manifest::RunManifest;

/// Environment variable capping worker threads.
pub const NUM_WORKERS_ENV: &str = "SEGLAND_NUM_WORKERS";

/// Sizes the global thread pool from `SEGLAND_NUM_WORKERS` when set.
pub fn configure_workers() -> Result<()> {
    let Ok(value) = std::env::var(NUM_WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Invalid(format!("{NUM_WORKERS_ENV}={value:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(e.to_string()))
}
