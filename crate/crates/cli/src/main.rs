//! `mte-welfare`: simulate, fit, choose, and audit treatment rules from the
//! command line. Every subcommand is driven by a JSON config file; the
//! `--seed`, `--out`, and `--threads` flags override the corresponding
//! config values for the invocation.

mod commands;
mod config;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mte_welfare::error::Error;

use commands::Session;
use config::{default_validate, parse_config, CommandKind};

#[derive(Parser)]
#[command(name = "mte-welfare", version, about = "Welfare analysis of treatment rules via marginal treatment effects")]
struct Cli {
    /// JSON config file; its `command` field must match the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override (also replaces `experiment.master_seed` for `regret`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Rayon thread-pool size (0 or absent: library default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from the configured spec.
    Simulate,
    /// Fit the sieve regression and report diagnostics.
    Fit,
    /// Apply a decision rule to a dataset and emit the chosen set.
    Choose,
    /// Evaluate population welfare of a fixed decision set.
    Welfare,
    /// Run a regret Monte Carlo experiment over a spec family.
    Regret,
    /// Run the built-in identity and sanity checks.
    Validate,
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::Simulate => CommandKind::Simulate,
            Command::Fit => CommandKind::Fit,
            Command::Choose => CommandKind::Choose,
            Command::Welfare => CommandKind::Welfare,
            Command::Regret => CommandKind::Regret,
            Command::Validate => CommandKind::Validate,
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnsupportedDimension { .. } => 1,
        Error::Data(_) | Error::Domain(_) | Error::EmptyArm { .. } => 2,
        Error::SingularDesign { .. } | Error::Numerical(_) => 3,
        Error::Invariant(_) => 4,
    }
}

fn run(cli: Cli) -> mte_welfare::error::Result<i32> {
    if let Some(threads) = cli.threads {
        if threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        }
    }

    let invoked = cli.command.kind();
    let loaded = match &cli.config {
        Some(path) => parse_config(path)?,
        None => {
            if invoked != CommandKind::Validate {
                return Err(Error::Config(format!(
                    "`{}` requires --config <file>",
                    invoked.name()
                )));
            }
            default_validate()
        }
    };
    if loaded.config.command != invoked {
        return Err(Error::Config(format!(
            "config declares command `{}` but `{}` was invoked",
            loaded.config.command.name(),
            invoked.name()
        )));
    }

    let session = Session::new(loaded.config, loaded.digest, cli.out, cli.seed)?;
    match invoked {
        CommandKind::Simulate => commands::simulate_cmd(&session),
        CommandKind::Fit => commands::fit_cmd(&session),
        CommandKind::Choose => commands::choose_cmd(&session),
        CommandKind::Welfare => commands::welfare_cmd(&session),
        CommandKind::Regret => commands::regret_cmd(&session),
        CommandKind::Validate => validate::validate_cmd(&session),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
