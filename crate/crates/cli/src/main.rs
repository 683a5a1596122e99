//! `steerhier` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_count, parse_grid, CliConfig};

#[derive(Parser, Debug)]
#[command(name = "steerhier", version, about = "Label two-qubit states by the hierarchy of steering measurement settings")]
pub struct Cli {
    /// key=value file whose entries override flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (falls back to STEERHIER_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ProtocolArgs {
    /// Budget preset: desk or paper
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample random states, label them and write a dataset
    Gen {
        #[arg(long, value_parser = parse_count)]
        count: u64,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the steering witnesses of certified records
        #[arg(long)]
        certs: Option<PathBuf>,
        /// Validate inputs and report the plan without labeling
        #[arg(long)]
        dry_run: bool,
    },
    /// Label one state given by its 15 Pauli coefficients or a family point
    Label {
        #[arg(long, num_args = 15, allow_negative_numbers = true, conflicts_with_all = ["family", "q", "xi"])]
        theta: Option<Vec<f64>>,
        #[arg(long, requires_all = ["q", "xi"])]
        family: Option<u8>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        xi: Option<f64>,
        #[command(flatten)]
        protocol: ProtocolArgs,
    },
    /// Train a classifier on a dataset
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "LutA6")]
        scheme: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.01)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.9)]
        momentum: f64,
        /// Hidden layer sizes, comma separated
        #[arg(long, default_value = "128,64")]
        hidden: String,
        #[arg(long, default_value_t = 1)]
        train_seed: u64,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
        #[arg(long, default_value_t = 30)]
        patience: usize,
        /// Evaluate on the test split after training
        #[arg(long)]
        eval_after: bool,
    },
    /// Accuracy and confusion matrix of a model on a dataset split
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// test, validation, train or all
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
    },
    /// Label a (ξ, q) grid of a state family
    Map {
        #[arg(long, default_value_t = 1)]
        family: u8,
        /// protocol or model:<scheme>
        #[arg(long, default_value = "protocol")]
        source: String,
        /// Grid size as NxM (ξ points x q points)
        #[arg(long, default_value = "64x64", value_parser = parse_grid)]
        grid: (usize, usize),
        /// Model file, required for model sources
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        protocol: ProtocolArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Predict the label of one state with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, num_args = 15, allow_negative_numbers = true, required = true)]
        theta: Vec<f64>,
    },
    /// Show hidden steerability of a Type-2 state
    DemoHidden {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        xi: f64,
        #[command(flatten)]
        protocol: ProtocolArgs,
    },
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let conf = match &cli.config {
        Some(path) => match CliConfig::load(path) {
            Ok(c) => c,
            Err(e) => return fail(&e),
        },
        None => CliConfig::default(),
    };
    if let Err(e) = commands::init_threads(cli.threads, &conf) {
        return fail(&e);
    }
    match commands::run(cli.command, &conf) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &steerhier::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn exit_code(e: &steerhier::Error) -> u8 {
    use steerhier::Error::*;
    match e {
        Config(_) | UnknownScheme(_) | UnknownLabel(_) | SchemeMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}
