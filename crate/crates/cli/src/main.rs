use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use iopathtune_cli::{cmd_replay, cmd_report, cmd_simulate, cmd_sweep, ReportFormat};

/// Client-side I/O path tuning experiments on a deterministic simulator.
#[derive(Parser)]
#[command(name = "iopathtune", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write time series, snapshot trace and summary.
    Simulate {
        /// Scenario file, or the name of a built-in template.
        config: String,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable the tuner: parameters stay at the scenario defaults.
        #[arg(long)]
        no_tuner: bool,
    },
    /// Run every power-of-two parameter pair with the tuner off.
    Sweep {
        /// Scenario file, or the name of a built-in template.
        config: String,
        /// Output CSV path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Worker threads for the grid (results do not depend on this).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-run tuning decisions from a recorded snapshot trace.
    Replay {
        /// Snapshot trace exported by `simulate`.
        trace: PathBuf,
        /// Output decisions CSV path.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Scenario supplying the tuner configuration (defaults otherwise).
        #[arg(long)]
        config: Option<String>,
    },
    /// Render charts and totals from one or more simulate output dirs.
    Report {
        /// Directory with simulate outputs (directly or in subdirectories).
        in_dir: PathBuf,
        /// Output file.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Output format.
        #[arg(long, default_value = "svg", value_parser = parse_format)]
        format: ReportFormat,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    match s {
        "svg" => Ok(ReportFormat::Svg),
        "ascii" => Ok(ReportFormat::Ascii),
        other => Err(format!("unknown format `{other}` (expected svg or ascii)")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("IOPATHTUNE_LOG", "warn"),
    )
    .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, seed, no_tuner } => {
            cmd_simulate(&config, &out, seed, no_tuner)
        }
        Command::Sweep { config, out, jobs } => cmd_sweep(&config, &out, jobs),
        Command::Replay { trace, out, config } => cmd_replay(&trace, &out, config.as_deref()),
        Command::Report { in_dir, out, format } => cmd_report(&in_dir, &out, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iopathtune: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
