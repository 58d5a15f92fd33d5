use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use svnet_cli::{run_with_threads, threads_from_env, CliError, Command};

/// Experiments for stochastic-volatility pricing networks.
#[derive(Parser, Debug)]
#[command(name = "svnet", version)]
struct Args {
    command: Command,
    /// JSON config; unknown keys are rejected.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the CSV output.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(3);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))
        .and_then(|text| run_with_threads(args.command, &text, &args.out, threads_from_env()?));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for msg in &outcome.failures {
                eprintln!("FAIL {msg}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("svnet {}: {e}", args.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
