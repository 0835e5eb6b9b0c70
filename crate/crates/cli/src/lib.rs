//! Configuration, dispatch and serialized outputs for the `weakinfo` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};
use weakinfo::Exec;

pub use commands::{execute, Outcome, Settings};
pub use config::{CommandName, Config};
pub use error::CliError;
pub use output::Precision;

pub const DEFAULT_OUT_DIR: &str = "weakinfo-out";

/// One run of the binary, after argument parsing.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Option<CommandName>,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub precision: Precision,
    pub tolerance: Option<f64>,
    pub threads: Option<usize>,
}

/// Reads the config, runs the command, writes the tables and `report.json`
/// into the output directory, and returns the report.
pub fn run(invocation: &Invocation) -> Result<Value, CliError> {
    let started = Instant::now();
    let source = invocation.config.display().to_string();
    let text = std::fs::read_to_string(&invocation.config)
        .map_err(|source| CliError::Read { path: invocation.config.clone(), source })?;
    let config = config::parse(&text).map_err(|e| CliError::config(&source, e.to_string()))?;
    let command = invocation
        .command
        .or(config.run.command)
        .ok_or_else(|| CliError::config(&source, "no command given on the command line or in `run.command`"))?;
    let out = invocation.out.clone().or_else(|| config.run.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let settings = Settings {
        precision: invocation.precision,
        tolerance: invocation.tolerance,
        exec: if invocation.threads == Some(1) { Exec::Sequential } else { Exec::default() },
    };
    let parsed = started.elapsed();
    let outcome = with_threads(invocation.threads, || execute(command, &config, &source, &settings))??;
    let solved = started.elapsed();
    let mut files: Vec<String> = outcome.bundle.files.iter().map(|(name, _)| name.clone()).collect();
    files.push("report.json".into());
    let mut report = json!({
        "command": command.name(),
        "config": config,
        "results": outcome.results,
        "outputs": files,
        "settings": {
            "precision": invocation.precision.0,
            "tolerance": invocation.tolerance,
            "threads": invocation.threads,
            "out": out,
        },
    });
    outcome.bundle.write(&out)?;
    report["timings_ms"] = json!({
        "parse": millis(parsed),
        "solve": millis(solved - parsed),
        "total": millis(started.elapsed()),
    });
    let report_path = out.join("report.json");
    std::fs::write(&report_path, output::pretty(&report)).map_err(|source| CliError::Write { path: report_path, source })?;
    Ok(report)
}

fn millis(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

#[cfg(feature = "parallel")]
fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::config("--threads", e.to_string()))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    Ok(f())
}
