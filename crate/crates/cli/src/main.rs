//! `mgn`: experiments, property checks and model utilities for monotone
//! gradient networks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mgn", version, about = "Monotone gradient network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config with [model], [train] and [experiment] sections.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream [default: 42].
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Override a config value, e.g. --set train.epochs=0. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the unit-square gradient field and report the error in dB.
    Gradfield(Common),
    /// Train flows between a seeded Gaussian and the standard normal.
    Coupling(Common),
    /// Learn a pixel-color map from a source image to a target image.
    Adapt(Common),
    /// Run the property suites on random models or a model file.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Check this model file instead of random models.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Print a model file's metadata.
    Info {
        /// Model file.
        model: PathBuf,
    },
}

/// Why a command stopped, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// A property check failed.
    Violation(String),
    /// Bad config, arguments or input files.
    Config(String),
    /// Training or output failed.
    Runtime(String),
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure::Runtime(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Violation(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Violation(m) | Failure::Config(m) | Failure::Runtime(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gradfield(c) => commands::gradfield(&c),
        Command::Coupling(c) => commands::coupling(&c),
        Command::Adapt(c) => commands::adapt(&c),
        Command::Verify { common, model } => commands::verify(&common, model.as_deref()),
        Command::Info { model } => commands::info(&model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
