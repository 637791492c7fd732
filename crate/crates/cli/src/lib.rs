//! Command-line front end for the `gasflow` library.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub mod config;
pub mod emit;
pub mod field;
pub mod ode;
pub mod solution;
pub mod verify;

#[derive(Parser, Debug)]
#[command(
    name = "gasflow",
    version,
    about = "Exact solutions of gas dynamics with linear and separated velocity profiles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reduced ODE systems.
    #[command(subcommand)]
    Ode(ode::OdeCmd),
    /// Velocity fields and their identities.
    #[command(subcommand)]
    Field(field::FieldCmd),
    /// Assembled gas-dynamic solutions.
    #[command(subcommand)]
    Solution(solution::SolutionCmd),
    /// Functionals, inequalities and criteria.
    #[command(subcommand)]
    Verify(verify::VerifyCmd),
}

#[derive(Debug)]
pub enum CliError {
    /// Malformed or out-of-range configuration.
    Config(String),
    Io(String),
    Core(gasflow::Error),
    /// A numerical event ended the run; holds the serialized events.
    Event(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Event(m) => write!(f, "numerical event: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gasflow::Error> for CliError {
    fn from(e: gasflow::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::Event(_) => 3,
        }
    }
}

/// Comma-separated numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        config::parse_list(s).map(List)
    }
}

/// Prints the validated configuration instead of running.
pub fn dry_run<T: Serialize>(cfg: &T) -> Result<(), CliError> {
    println!("{}", emit::json(&serde_json::json!({ "dry_run": true, "config": cfg })));
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GASFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("GASFLOW_THREADS must be a positive integer, got `{v}`")))?;
    // a pool set up earlier in the same process stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Ode(c) => ode::run(c),
        Command::Field(c) => field::run(c),
        Command::Solution(c) => solution::run(c),
        Command::Verify(c) => verify::run(c),
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
