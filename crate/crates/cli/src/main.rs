use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use weakinfo_cli::{CliError, CommandName, Invocation, Precision};

/// Value of weak information in discrete-time markets.
#[derive(Debug, Parser)]
#[command(name = "weakinfo", version)]
struct Args {
    /// Subcommand; falls back to `run.command` in the config.
    #[arg(value_enum)]
    command: Option<CommandName>,
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (default: `run.out`, then `weakinfo-out`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Significant digits in every numeric output.
    #[arg(long, default_value_t = 7, value_parser = clap::value_parser!(u32).range(1..=17))]
    precision: u32,
    /// Print shortest round-trip floats instead of rounding.
    #[arg(long, conflicts_with = "precision")]
    full_precision: bool,
    /// Trinomial solver tolerance, relative to initial wealth.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = err.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}

fn run(args: Args) -> anyhow::Result<()> {
    if let Some(t) = args.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::config("--tolerance", format!("must be positive, got {t}")).into());
        }
    }
    let invocation = Invocation {
        command: args.command,
        config: args.config.clone(),
        out: args.out,
        precision: Precision(if args.full_precision { None } else { Some(args.precision as usize) }),
        tolerance: args.tolerance,
        threads: args.threads.map(|n| n as usize),
    };
    let report = weakinfo_cli::run(&invocation)?;
    println!("{}", serde_json::to_string_pretty(&report).context("serializing the report")?);
    Ok(())
}
