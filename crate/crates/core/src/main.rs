use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trms_ftc::harness::{self, ScenarioConfig, SimTrace};
use trms_ftc::plant::DEFAULT_INPUT_LIMIT;
use trms_ftc::Result;

#[derive(Parser)]
#[command(name = "trms-ftc", version, about = "Twin-rotor fault-tolerant control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write its trace as CSV.
    Sim {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize all gains for the configured bank and write them as JSON.
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the local-model bank and write it as JSON.
    Linearize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print summary metrics of a trace as JSON.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// Window split time; defaults to the first nonzero fault sample.
        #[arg(long)]
        split: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_INPUT_LIMIT)]
        u_limit: f64,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim { config, out } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            harness::run_scenario(&cfg)?.write_csv(&out)
        }
        Command::Design { config, out } => {
            let design = ScenarioConfig::from_file(&config)?.design()?;
            write(&out, &design.to_json()?)
        }
        Command::Linearize { config, out } => {
            let bank = ScenarioConfig::from_file(&config)?.build_bank()?;
            write(&out, &bank.to_json()?)
        }
        Command::Metrics { trace, split, u_limit } => {
            let trace = SimTrace::read_csv(&trace)?;
            let split = split.or_else(|| harness::inferred_onset(&trace));
            let m = harness::metrics(&trace, split, u_limit)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
