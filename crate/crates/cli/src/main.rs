//! `beltrami`: command-line driver for the beltrami-core experiments.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::JobConfig;

#[derive(Parser, Debug)]
#[command(name = "beltrami", version, about = "Weighted Beltrami-equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply B, B*, conj-B, C, a truncated integral or the maximal function to a field.
    Transform(JobArgs),
    /// Solve a Beltrami equation and report the a priori ratio.
    Solve(JobArgs),
    /// Estimate the Muckenhoupt constant of a weight.
    Apconst(JobArgs),
    /// Commutator smoothing check, compactness diagnostics or the conjugate example.
    Commutator(JobArgs),
    /// Principal solution, oracle errors and Jacobian scans.
    Qcmap(JobArgs),
    /// A priori ratio, Im-operator or growth probes.
    Probe(JobArgs),
    /// Aggregate JSON reports in a directory into CSV.
    Report(JobArgs),
}

#[derive(Args, Debug)]
struct JobArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for every random draw of the job (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` override, applied after the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

/// Classified failure; the variant decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<beltrami_core::Error> for Failure {
    fn from(e: beltrami_core::Error) -> Failure {
        use beltrami_core::Error as E;
        match e {
            E::NotConverged { .. } | E::Inversion { .. } | E::NonFinite { .. } => Failure::Numerical(e.to_string()),
            E::Io(_) | E::Format(_) => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Transform(a) => ("transform", a),
        Command::Solve(a) => ("solve", a),
        Command::Apconst(a) => ("apconst", a),
        Command::Commutator(a) => ("commutator", a),
        Command::Qcmap(a) => ("qcmap", a),
        Command::Probe(a) => ("probe", a),
        Command::Report(a) => ("report", a),
    };
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("beltrami {name}: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(name: &str, args: &JobArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => JobConfig::load(p)?,
        None => JobConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", seed);
    }
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", args.out.display())))?;
    commands::dispatch(name, &cfg, &args.out)
}
