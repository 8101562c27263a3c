mod config;
mod error;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Command, ExperimentConfig};
use error::CliError;

/// Krein-space spectral and scattering experiments for discretized Klein-Gordon models.
#[derive(Debug, Parser)]
#[command(name = "kgscatter", version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// output directory; KGSCATTER_OUT takes precedence
    #[arg(long)]
    out: Option<PathBuf>,
    /// width of the worker pool
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: &Args) -> Result<PathBuf, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|source| CliError::ConfigUnreadable { path: args.config.display().to_string(), source })?;
    let cfg = ExperimentConfig::parse(&text)?;
    let out = std::env::var_os("KGSCATTER_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| args.out.clone())
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("kgscatter-out"));
    if args.parallel == Some(0) {
        return Err(CliError::ConfigInvalid { pointer: "".into(), message: "--parallel must be at least 1".into() });
    }
    let opts = run::RunOptions { seed: args.seed.or(cfg.run.seed).unwrap_or(0), parallel: args.parallel };
    run::run_command(args.command, &cfg, out, &opts)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| execute(&args)) {
        Ok(Ok(path)) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("kgscatter: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("kgscatter: internal error (panic)");
            ExitCode::from(4)
        }
    }
}
