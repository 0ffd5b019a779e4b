mod cli;
mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use config::{ExperimentConfig, FileConfig};
use error::{CliError, CliResult};

pub const THREADS_ENV: &str = "GEOTRACK_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        CliError::Config(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let file = match &cli.overrides.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let cfg = ExperimentConfig::resolve(file, &cli.overrides)?;
    match &cli.command {
        Command::Params => commands::params(&cfg),
        Command::Bounds(args) => commands::bounds(&cfg, args),
        Command::Run => commands::run(&cfg).map(|_| ()),
        Command::Verify(args) => commands::verify(&cfg, args),
        Command::Plot(args) => commands::plot(&cfg, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
