//! Library side of the `iopathtune` command-line harness.
//!
//! Each subcommand is an ordinary function here so integration tests can
//! drive them without spawning processes; `main` only parses arguments and
//! maps errors to exit codes.

mod output;
mod replay;
mod report;
mod templates;

use std::fs;
use std::path::Path;

use thiserror::Error;

use iopathtune_core::scenario::{self, Scenario};
use iopathtune_core::sim;
use iopathtune_core::sweep;

pub use replay::cmd_replay;
pub use report::{cmd_report, ReportFormat};
pub use templates::{template_names, template_text};

/// Errors mapped onto the documented exit codes: 2 for configuration
/// problems, 3 for trace parse problems, 4 for I/O.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("trace error at line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Trace { .. } => 3,
            CliError::Io(_) => 4,
        }
    }

    fn io(context: &str, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

/// Load a scenario from a file path or, failing that, a built-in template
/// name.
pub fn load_scenario(config: &str) -> Result<Scenario, CliError> {
    let path = Path::new(config);
    let text = if path.is_file() {
        fs::read_to_string(path).map_err(|e| CliError::io(config, e))?
    } else if let Some(text) = templates::template_text(config) {
        text.to_string()
    } else {
        return Err(CliError::Config(format!(
            "`{config}` is neither a readable file nor a known template (templates: {})",
            templates::template_names().join(", ")
        )));
    };
    scenario::from_toml_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

/// Run one scenario and write `timeseries.csv`, `snapshots.trace` and
/// `summary.csv` into `out_dir`.
pub fn cmd_simulate(
    config: &str,
    out_dir: &Path,
    seed: Option<u64>,
    no_tuner: bool,
) -> Result<(), CliError> {
    let mut scenario = load_scenario(config)?;
    if let Some(seed) = seed {
        scenario.sim.seed = seed;
    }
    if no_tuner {
        scenario.tuner.enabled = false;
    }
    log::info!(
        "simulate: {} clients, {} s, seed {}, tuner {}",
        scenario.clients.len(),
        scenario.sim.duration_s,
        scenario.sim.seed,
        if scenario.tuner.enabled { "on" } else { "off" }
    );
    let result = sim::run(&scenario).map_err(|e| CliError::Config(e.to_string()))?;

    fs::create_dir_all(out_dir).map_err(|e| CliError::io(&out_dir.display().to_string(), e))?;
    let write = |name: &str, data: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        fs::write(&path, data).map_err(|e| CliError::io(&path.display().to_string(), e))
    };
    write("timeseries.csv", output::timeseries_csv(&result))?;
    write("snapshots.trace", output::snapshot_trace(&result))?;
    write("summary.csv", output::summary_csv(&result))?;
    write("decisions.csv", output::decisions_csv(&result))?;
    Ok(())
}

/// Run the full static parameter grid and write `sweep.csv`.
pub fn cmd_sweep(config: &str, out_path: &Path, jobs: Option<usize>) -> Result<(), CliError> {
    let mut scenario = load_scenario(config)?;
    scenario.tuner.enabled = false;
    log::info!("sweep: {} grid points", sweep::grid(&scenario).len());
    let result = sweep::sweep(&scenario, jobs).map_err(|e| CliError::Config(e.to_string()))?;
    let data = output::sweep_csv(&result);
    if let Some(parent) = out_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::io(&parent.display().to_string(), e))?;
        }
    }
    fs::write(out_path, data).map_err(|e| CliError::io(&out_path.display().to_string(), e))
}
