//! `facn` — command-line front end for the capsule super-resolution stack.
//!
//! Subcommands: `degrade` (build an LR corpus), `train`, `eval` (metrics +
//! comparison grids), `ablate` (variant sweep), `gradcheck` (backward-pass
//! verification). Every command is deterministic given `--seed`.
//!
//! Exit codes: 0 on success, 1 for validation errors (bad flags, bad
//! config, missing inputs), 2 for runtime failures (I/O while processing,
//! non-finite numerics, failed gradient checks).

mod ablate;
mod degrade;
mod eval;
mod gradcheck;
mod grid;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use facn_core::error::Error;

#[derive(Parser)]
#[command(name = "facn", version, about = "Capsule-network face super-resolution toolkit")]
struct Cli {
    /// Master seed for every stochastic choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Config file of `key = value` lines; any key can also be overridden
    /// by an environment variable (`train.lr` -> `FACN_TRAIN_LR`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config's `out.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade a directory of HR PNGs into LR PNGs plus a manifest.
    Degrade(degrade::Args),
    /// Train from the config file, writing checkpoints and a metrics CSV.
    Train(train::Args),
    /// Evaluate a checkpoint on paired LR/HR directories; write a report
    /// CSV and 4-panel comparison grids.
    Eval(eval::Args),
    /// Train each model variant briefly on one dataset and tabulate.
    Ablate(ablate::Args),
    /// Verify backward passes against 64-bit central finite differences.
    Gradcheck(gradcheck::Args),
}

/// Command outcome carrying the exit-code class.
pub enum CliError {
    /// The request itself is unusable: bad flags, bad config, bad dataset.
    Validation(String),
    /// The work started and then failed: I/O, numerics, tolerance misses.
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Config(_) | Error::Dataset(_) => {
                CliError::Validation(e.to_string())
            }
            Error::NonFinite(_) | Error::Checkpoint(_) | Error::Io { .. } | Error::Image { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

/// Shared context resolved from the global flags.
pub struct Globals {
    /// `--seed` exactly as given; commands that also read a config file
    /// treat an explicit flag as an override of the config's seed.
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Globals {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// The config file is optional globally but required by most commands.
    pub fn require_config(&self) -> Result<&PathBuf, CliError> {
        self.config.as_ref().ok_or_else(|| {
            CliError::Validation("--config <file> is required for this command".to_string())
        })
    }

    /// Output directory: the flag, else `fallback`.
    pub fn out_dir(&self, fallback: &std::path::Path) -> PathBuf {
        self.out.clone().unwrap_or_else(|| fallback.to_path_buf())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let globals = Globals {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
    };

    let result = match cli.command {
        Command::Degrade(args) => degrade::run(&globals, &args),
        Command::Train(args) => train::run(&globals, &args),
        Command::Eval(args) => eval::run(&globals, &args),
        Command::Ablate(args) => ablate::run(&globals, &args),
        Command::Gradcheck(args) => gradcheck::run(&globals, &args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
