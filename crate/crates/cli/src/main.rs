//! `smfpca`: fit, simulate, evaluate and inspect surface PCA models.
//!
//! Exit status is 0 on success, 2 for input errors and 3 for numerical
//! failures.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{evaluate, fit, mesh_info, simulate};
use config::Settings;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "smfpca",
    version,
    about = "Smooth functional PCA on triangulated surfaces"
)]
struct Cli {
    /// Config file: `key = value` lines or a flat JSON object (e.g. a manifest)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit components to data observed on a mesh
    Fit(fit::FitArgs),
    /// Generate synthetic data with known components
    Simulate(simulate::SimulateArgs),
    /// Score a fit against the truth, or run a replicate study
    Evaluate(evaluate::EvaluateArgs),
    /// Print mesh statistics
    MeshInfo(mesh_info::MeshInfoArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Fit(args) => {
            let mut s = Settings::new("fit", fit::KEYS, config)?;
            args.apply(&mut s);
            fit::run(s)
        }
        Command::Simulate(args) => {
            let mut s = Settings::new("simulate", simulate::KEYS, config)?;
            args.apply(&mut s);
            simulate::run(s)
        }
        Command::Evaluate(args) => {
            let mut s = Settings::new("evaluate", evaluate::KEYS, config)?;
            args.apply(&mut s);
            evaluate::run(s)
        }
        Command::MeshInfo(args) => {
            let mut s = Settings::new("mesh-info", mesh_info::KEYS, config)?;
            args.apply(&mut s);
            mesh_info::run(s)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("smfpca: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
