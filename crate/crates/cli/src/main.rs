use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use sparfun::experiments::{run, Overrides, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    CoherenceStudy,
    DiscretizeStudy,
    Recover,
    Oracle,
    TaylorCheck,
    Pipeline,
    Rates,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::CoherenceStudy => Subcommand::CoherenceStudy,
            Command::DiscretizeStudy => Subcommand::DiscretizeStudy,
            Command::Recover => Subcommand::Recover,
            Command::Oracle => Subcommand::Oracle,
            Command::TaylorCheck => Subcommand::TaylorCheck,
            Command::Pipeline => Subcommand::Pipeline,
            Command::Rates => Subcommand::Rates,
        }
    }
}

/// Sparse recovery and functional evaluation experiments.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    command: Command,

    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,

    /// Base seed; required for study subcommands.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Overrides the trial count of the config.
    #[arg(long)]
    trials: Option<usize>,

    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(args: &Args) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let overrides = Overrides { seed: args.seed, trials: args.trials, workers: args.workers };
    let cmd = Subcommand::from(args.command);
    let output = run(cmd, &text, &overrides, &args.out).with_context(|| format!("{} ({})", cmd.name(), args.config.display()))?;
    for file in &output.files {
        println!("{}", file.display());
    }
    println!("{}", output.summary);
    Ok(())
}
