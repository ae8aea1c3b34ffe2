//! `mdk`: simulate observables, evaluate key rates, scan distances and
//! optimize decoy intensities from one TOML configuration.

mod commands;
mod config;
mod csvio;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{RunConfig, RunMode};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mdk",
    version,
    about = "Decoy-state MDI-QKD key rates with coding errors"
)]
struct Cli {
    /// TOML config, or a CSV previously written by mdk (its header is read back).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV; overrides `output.path`. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `mode`.
    #[arg(long, global = true, value_enum)]
    mode: Option<RunMode>,
    /// Sets `single_basis_decoy = true`.
    #[arg(long, global = true)]
    single_basis_decoy: bool,
    /// Sets `phase_randomized = true`.
    #[arg(long, global = true)]
    phase_randomized: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the observables CSV for the configured sources and channel.
    Simulate,
    /// Bound s11 and e11 from an observables CSV and evaluate the key rate.
    Keyrate {
        #[arg(long)]
        observables: PathBuf,
    },
    /// Key rate over the `scan` distances or transmittances.
    Scan,
    /// Exhaustive search over the `optimize` intensity grid.
    Optimize,
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode;
    }
    cfg.single_basis_decoy |= cli.single_basis_decoy;
    cfg.phase_randomized |= cli.phase_randomized;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    let out = commands::output_path(cli.out.clone(), &cfg);
    let out = out.as_deref();
    match &cli.command {
        Command::Simulate => commands::simulate(&cfg, out),
        Command::Keyrate { observables } => commands::keyrate(&cfg, observables, out).map(|_| ()),
        Command::Scan => commands::scan(&cfg, out),
        Command::Optimize => commands::optimize(&cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MDK_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
