//! Command-line pipeline for emotion-driven reaction generation: dataset
//! synthesis, prior and denoiser training, generation, evaluation and export.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod layout;

pub use commands::{run, Cli};
pub use error::{exit, CliError, Result};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "EREACT_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] when it is set.
pub fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}
