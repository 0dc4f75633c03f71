use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "sieve", version, about = "Neumann sieve experiments: capacities, resolvent convergence, spectra", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a config entry, `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write log-log plots.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Cell-problem capacities on a sequence of meshes.
    Capacity,
    /// Calibrated half-widths for each study eps.
    Calibrate,
    /// One perforated/limit resolvent pair.
    Solve,
    /// Resolvent error sweep over eps with rate fits.
    Convergence,
    /// Lowest eigenvalues of both operators over eps.
    Spectral,
    /// Interface defect against test functions over eps.
    Assumption,
    /// Built-in oracle checks.
    Selftest,
}

pub struct Run {
    pub out: PathBuf,
    pub svg: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let run = Run { out: cli.out, svg: cli.svg };
    let result = if cli.command == Command::Selftest {
        commands::selftest(&run)
    } else {
        let Some(path) = cli.config else {
            eprintln!("error: --config is required for this command");
            return ExitCode::from(2);
        };
        let loaded = std::fs::read_to_string(&path)
            .map_err(|e| format!("{}: {e}", path.display()))
            .and_then(|text| config::parse_config(&text, &cli.set).map_err(|e| e.to_string()));
        match loaded {
            Ok(l) => commands::dispatch(cli.command, &l, &run),
            Err(e) => Err(e),
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
