use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qls_cli::{load_configs, resolve, run, CliError, Command};
use rayon::prelude::*;

/// Runs one experiment subcommand over a JSON config (an object, or an array
/// of objects run concurrently).
#[derive(Debug, Parser)]
#[command(name = "qls", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long, env = "QLS_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qls {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    if let Some(k) = args.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfgs = load_configs(&args.config)?;
    let jobs = resolve(cfgs, args.out.clone(), args.seed);
    let results: Vec<Result<(), CliError>> = jobs.par_iter().map(|(c, dir)| run(args.command, c, dir)).collect();
    let mut worst: Option<CliError> = None;
    for (r, (_, dir)) in results.into_iter().zip(&jobs) {
        if let Err(e) = r {
            eprintln!("{}: {e}", dir.display());
            if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                worst = Some(e);
            }
        }
    }
    worst.map_or(Ok(()), Err)
}
