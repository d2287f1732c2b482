//! The `olac` command: repository authoring, harvesting, queries and the
//! four HTTP services.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 environment or I/O
//! error.

pub mod aggregate;
pub mod config;
pub mod http;
pub mod repo;
pub mod serve;

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use olac_core::Datestamp;
use thiserror::Error;

use crate::config::ToolConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 1,
            CliError::Environment(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "olac", version, about = "Author, publish, harvest and serve language archive metadata")]
pub struct Cli {
    /// Configuration file (default: ./olac.toml when present).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Clock used for datestamps, for scripted and reproducible runs.
    #[arg(long, global = true, hide = true)]
    pub now: Option<Datestamp>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create and edit a static repository document.
    Repo(repo::RepoArgs),
    /// Run one of the HTTP services until interrupted.
    Serve(serve::ServeArgs),
    /// Register providers, harvest them and query the union.
    Aggregator(aggregate::AggregatorArgs),
}

/// Everything a command needs besides its arguments.
pub struct Context<'a> {
    pub config: ToolConfig,
    pub now: Option<Datestamp>,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl Context<'_> {
    pub fn now(&self) -> Datestamp {
        self.now.unwrap_or_else(Datestamp::now)
    }
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run<I, T>(args: I, env: &HashMap<String, String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => 1,
            };
        }
    };
    match execute(cli, env, out, err) {
        Ok(()) => 0,
        Err((e, err)) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute<'a>(
    cli: Cli,
    env: &HashMap<String, String>,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
) -> Result<(), (CliError, &'a mut dyn Write)> {
    let mut config = match ToolConfig::load(cli.config.as_deref(), env) {
        Ok(config) => config,
        Err(e) => return Err((e, err)),
    };
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    let mut ctx = Context {
        config,
        now: cli.now,
        out,
        err,
    };
    let result = match cli.command {
        Command::Repo(args) => repo::run(args, &mut ctx),
        Command::Serve(args) => serve::run(args, &mut ctx),
        Command::Aggregator(args) => aggregate::run(args, &mut ctx),
    };
    result.map_err(|e| (e, ctx.err))
}
