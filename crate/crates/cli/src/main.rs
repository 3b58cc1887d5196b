//! `transduce`: runs one computation from a TOML config and writes CSV/JSON
//! artifacts plus a manifest into the output directory.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::{persist, Artifacts, RunContext};

#[derive(Parser)]
#[command(name = "transduce", version, about = "Transducer coupling, dynamics and protocol runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One protocol run: trajectory CSV and result JSON.
    Simulate(Common),
    /// Parameter sweep or protocol hierarchy over mechanical Q.
    Sweep(Common),
    /// Field search at fixed splitting over a |B| grid.
    SpinField(Common),
    /// Overlap-integral couplings from field-profile exports.
    Coupling(Common),
    /// Mechanical Q budget and cooperativities.
    Qbudget(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Reserved; recorded in the manifest only.
    #[arg(long)]
    seed: Option<u64>,
}

type Handler = fn(&RunConfig, &mut Artifacts) -> CliResult<()>;

fn execute(name: &str, handler: Handler, args: &Common) -> CliResult<()> {
    let started = Instant::now();
    let cfg = RunConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut art = Artifacts::default();
    match args.jobs {
        Some(0) => return Err(CliError::config("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("--jobs {n}: {e}")))?
            .install(|| handler(&cfg, &mut art))?,
        None => handler(&cfg, &mut art)?,
    }
    let ctx = RunContext {
        command: name,
        config_path: &args.config,
        config: &cfg,
        jobs: args.jobs,
        seed: args.seed,
        started,
    };
    persist(&out, &art, &ctx)?;
    match art.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, handler, args): (&str, Handler, &Common) = match &cli.command {
        Command::Simulate(a) => ("simulate", commands::simulate, a),
        Command::Sweep(a) => ("sweep", commands::run_sweep, a),
        Command::SpinField(a) => ("spin-field", commands::spin_field, a),
        Command::Coupling(a) => ("coupling", commands::coupling, a),
        Command::Qbudget(a) => ("qbudget", commands::qbudget, a),
    };
    match execute(name, handler, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
