//! `softdecode` command-line tool.
//!
//! ```text
//! softdecode <command> [CONFIG] [--key=value ...]
//! ```
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 numeric divergence, 4 objective not differentiable.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Parser)]
#[command(name = "softdecode", version, about = "Relaxed scheduled-sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task as TSV corpora plus vocab.txt.
    GenData(Invocation),
    /// Train one run per seed; writes metrics CSV and checkpoints.
    Train(Invocation),
    /// Decode a split with a checkpoint and print its metric.
    Evaluate(Invocation),
    /// Compare analytic and finite-difference gradients of the rollout loss.
    Gradcheck(Invocation),
    /// Sweep one parameter and write hard and relaxed loss curves.
    Sweep(Invocation),
}

#[derive(Args)]
struct Invocation {
    /// Optional config file followed by `--key=value` overrides.
    #[arg(
        allow_hyphen_values = true,
        trailing_var_arg = true,
        value_name = "CONFIG | --key=value"
    )]
    args: Vec<String>,
}

impl Invocation {
    fn split(self) -> Result<(Option<PathBuf>, Vec<String>), Failure> {
        let mut config = None;
        let mut overrides = Vec::new();
        for arg in self.args {
            if arg.starts_with("--") {
                overrides.push(arg);
            } else if config.is_none() {
                config = Some(PathBuf::from(arg));
            } else {
                return Err(Failure::config(anyhow::anyhow!("unexpected argument `{arg}`")));
            }
        }
        Ok((config, overrides))
    }
}

type Handler = fn(&commands::Context) -> Result<(), Failure>;

fn run(cli: Cli) -> Result<(), Failure> {
    let (command, inv): (Handler, Invocation) = match cli.command {
        Command::GenData(i) => (commands::gen_data, i),
        Command::Train(i) => (commands::train, i),
        Command::Evaluate(i) => (commands::evaluate, i),
        Command::Gradcheck(i) => (commands::gradcheck, i),
        Command::Sweep(i) => (commands::sweep, i),
    };
    let (config, overrides) = inv.split()?;
    let ctx = commands::Context::load(config.as_deref(), &overrides)?;
    command(&ctx)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
