//! `levy-transport`: seeded experiment runner for the transport chain.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, RunFlags};
use config::{Format, Loaded};

#[derive(Debug, Parser)]
#[command(name = "levy-transport", version, about = "Bessel-kernel transport chain experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; see `print-defaults`.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output file (stdout when absent).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Monte Carlo replicas for `stationary`.
    #[arg(long, global = true, value_name = "N")]
    replicas: Option<usize>,

    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Report non-existent stationary laws instead of failing.
    #[arg(long, global = true)]
    allow_divergent: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact solution and Euler scheme on one sampled path.
    Simulate,
    /// Stationary laws: quadrature against pull-back Monte Carlo.
    Stationary,
    /// Truncated |H_n|^alpha integrals and their growth rate.
    FlightsScan,
    /// Lattice stationary statistics against the mollified continuum limit.
    Continuum,
    /// Table of J_n(x).
    BesselDump,
    /// Print the default config.
    PrintDefaults,
}

fn load(cli: &Cli) -> Result<Loaded, CliError> {
    let mut loaded = match &cli.config {
        Some(p) => Loaded::read(p)?,
        None => Loaded::defaults(),
    };
    let cfg = &mut loaded.config;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(f) = cli.format {
        cfg.format = f;
    }
    if let Some(r) = cli.replicas {
        cfg.stationary.replicas = r;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(loaded)
}

fn emit(bytes: &[u8], out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::PrintDefaults = cli.command {
        return emit(config::defaults_toml().as_bytes(), cli.out.as_ref());
    }
    let loaded = load(cli)?;
    if loaded.config.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(loaded.config.threads).build_global();
    }
    let flags = RunFlags { allow_divergent: cli.allow_divergent };
    let report = match cli.command {
        Command::Simulate => commands::simulate(&loaded)?,
        Command::Stationary => commands::stationary(&loaded, flags)?,
        Command::FlightsScan => commands::flights(&loaded)?,
        Command::Continuum => commands::continuum(&loaded, flags)?,
        Command::BesselDump => commands::bessel_dump(&loaded)?,
        Command::PrintDefaults => unreachable!(),
    };
    let format: Format = loaded.config.format;
    emit(&report.render(format), cli.out.as_ref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
