//! Command-line front end.
//!
//! Exit codes: 0 when every sweep point completed, 2 when some point diverged
//! or failed (its partial output and the manifest are still written), 1 on
//! configuration or I/O errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_methods, ConfigError, SimulationConfig};
use crate::manifest::RunManifest;
use crate::pipelines::{self, resolve_out_dir, RunError, RunOptions};
use crate::presets;

#[derive(Debug, Parser)]
#[command(name = "ncamaps", version, about = "Dynamical-map solvers for the spin-boson model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expectation values and density diagnostics in time.
    Dynamics(RunArgs),
    /// Steady state against coupling strength.
    Steady(RunArgs),
    /// Correlation spectrum, susceptibility and transmission.
    Spectrum(RunArgs),
    /// Transmission over the bias/frequency plane.
    Transmission(RunArgs),
    /// Time-step self-convergence.
    Convergence(RunArgs),
    /// List presets, or print one as a configuration file.
    Presets { name: Option<String> },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset; --config and the flags below override it.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated methods: nca, nca_markov, born, born_markov.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated coupling strengths.
    #[arg(long)]
    alpha: Option<String>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replace the output of a previous run in the same directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("--set expects KEY=VALUE, got `{0}`")]
    BadSet(String),
}

fn build_config(args: &RunArgs) -> Result<SimulationConfig, CliError> {
    let mut text = String::new();
    if let Some(name) = &args.preset {
        text.push_str(&format!("preset = {name}\n"));
    }
    if let Some(path) = &args.config {
        text.push_str(&std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?);
    }
    let mut config = SimulationConfig::parse(&text)?;
    if let Some(m) = &args.method {
        config.methods = parse_methods("methods", m)?;
    }
    if let Some(a) = &args.alpha {
        config.set("bath.alpha", a)?;
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::BadSet(kv.clone()))?;
        config.set(k.trim(), v.trim())?;
    }
    config.validate()?;
    Ok(config)
}

fn execute(command: Command) -> Result<i32, CliError> {
    let (args, pipeline): (RunArgs, fn(&SimulationConfig, &RunOptions) -> Result<RunManifest, RunError>) = match command {
        Command::Presets { name: None } => {
            for n in presets::NAMES {
                println!("{n}");
            }
            return Ok(0);
        }
        Command::Presets { name: Some(n) } => {
            print!("{}", presets::preset(&n)?.to_text());
            return Ok(0);
        }
        Command::Dynamics(a) => (a, pipelines::run_dynamics),
        Command::Steady(a) => (a, pipelines::run_steady_sweep),
        Command::Spectrum(a) => (a, pipelines::run_spectrum),
        Command::Transmission(a) => (a, pipelines::run_transmission_map),
        Command::Convergence(a) => (a, pipelines::run_convergence),
    };
    let config = build_config(&args)?;
    let mut opts = RunOptions::new(resolve_out_dir(args.out.as_deref(), &config));
    if let Some(w) = args.workers {
        opts.workers = w;
    }
    opts.overwrite = args.overwrite;
    let manifest = pipeline(&config, &opts)?;
    for r in manifest.records.iter().filter(|r| !r.status.is_completed()) {
        eprintln!("{}: {:?}", r.name, r.status);
    }
    Ok(manifest.exit_code())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
