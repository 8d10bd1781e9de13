//! Experiment driver: configuration, seeded runs, diagnostics and CSV output.

pub mod cli;
pub mod config;
pub mod driver;
pub mod error;
pub mod output;
pub mod presets;
pub mod report;
pub mod sweep;

use std::path::Path;

pub use config::ExperimentConfig;
pub use driver::{simulate, RunResult};
pub use error::CliError;

/// Runs `cfg` and writes its outputs into `dir`. An aborted run still
/// writes everything recorded before the failing round, then returns
/// [`CliError::Runtime`].
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path, command: &str) -> Result<RunResult, CliError> {
    cfg.validate()?;
    output::ensure_dir(dir)?;
    let mut sink = output::MatrixSink::new(dir, cfg.output.dump_matrices, cfg.output.dump_weights)?;
    let mut result =
        driver::with_threads(cfg.run.threads, || driver::simulate_observed(cfg, &mut |t, p| sink.observe(t, p)))??;
    sink.finish()?;
    output::write_run(&result, dir, command)?;
    match result.aborted.take() {
        Some((round, source)) => Err(CliError::Runtime { round, source }),
        None => Ok(result),
    }
}
