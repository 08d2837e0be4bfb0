use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qsure_cli::{run, Command, Invocation};

/// Quasi-sure SDE solving, patching and robust pricing under a finite
/// family of volatility models.
#[derive(Debug, Parser)]
#[command(name = "qsure", version)]
struct Args {
    /// simulate | integrate | compat | patch | price | validate
    #[arg(value_enum)]
    command: Command,

    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides `[output] directory`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,

    /// Replaces `[run] master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.threads == Some(0) {
        eprintln!("qsure: --threads must be at least 1");
        return ExitCode::from(2);
    }
    let inv = Invocation { command: args.command, config: args.config, out: args.out, threads: args.threads, seed: args.seed };
    match run(&inv) {
        Ok(outcome) => {
            println!("{}: {}", inv.command.name(), outcome.headline);
            println!("wrote {}", outcome.out_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let err = failure.error;
            if let Some(o) = failure.outcome {
                println!("{}: {}", inv.command.name(), o.headline);
                println!("wrote {}", o.out_dir.join("manifest.json").display());
            }
            eprintln!("qsure {}: {err}", inv.command.name());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
