use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use panel_dml::commands::{apply_overrides, run, Command, Overrides};
use panel_dml::config::{Format, RunConfig};
use panel_dml::Result;

#[derive(Parser)]
#[command(name = "panel-dml", version, about = "Household-finance panel ingestion and (dynamic) double machine learning")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Household subset, `EXPR` or `EXPR@WAVE` (e.g. `rural=1@2019`).
    #[arg(long, global = true)]
    subset: Option<String>,
    /// Overrides the output path of the command.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Load a survey export, build the sample and indices, write the canonical dataset.
    Ingest,
    /// Fit the configured estimator on a canonical dataset.
    Estimate,
    /// Simulate a dynamic panel (and its true effects when defined).
    Simulate,
}

fn execute(cli: &Cli) -> Result<()> {
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Estimate => Command::Estimate,
        Cmd::Simulate => Command::Simulate,
    };
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| panel_dml::CliError::config("--config PATH is required"))?;
    let mut cfg = RunConfig::load(path)?;
    let overrides = Overrides {
        seed: cli.seed,
        subset: cli.subset.clone(),
        output: cli.output.clone(),
        format: cli.format,
    };
    apply_overrides(&mut cfg, command, &overrides)?;
    let report = run(&cfg, command)?;
    for n in &report.notices {
        eprintln!("notice: {n}");
    }
    print!("{}", report.stdout);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
