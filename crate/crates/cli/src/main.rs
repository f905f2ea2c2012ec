//! `mixstereo` command-line tool.
//!
//! Exit codes: 0 success, 1 domain error (validation failure, mismatch, bad
//! input), 2 environment error (I/O).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "mixstereo", version, about = "Stereo matching toolkit: datasets, mixing, inference, evaluation")]
struct Cli {
    /// Pipeline config JSON; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset catalog JSON. Without one the built-in reference catalog is used.
    #[arg(long, global = true, env = "TOOL_CATALOG")]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan or validate a dataset tree.
    #[command(subcommand)]
    Dataset(commands::dataset::DatasetCmd),
    /// Build, inspect and sample mixed training manifests.
    #[command(subcommand)]
    Mix(commands::mix::MixCmd),
    /// Run disparity inference on a rectified pair.
    Infer(commands::infer::InferArgs),
    /// Score predicted disparity maps against ground truth.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Combine evaluation results into a benchmark table.
    Report(commands::report::ReportArgs),
    /// Write the two-phase training schedule.
    Plan(commands::plan::PlanArgs),
    /// Create model weight files.
    #[command(subcommand)]
    Weights(commands::weights::WeightsCmd),
}

/// Options resolved from flags, environment and the config file.
pub struct Context {
    pub config: config::PipelineConfig,
    pub catalog_path: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => config::PipelineConfig::load(p)?,
        None => config::PipelineConfig::default(),
    };
    let catalog_path = cli.catalog.clone().or_else(|| config.catalog.clone());
    let ctx = Context { config, catalog_path };
    match cli.command {
        Command::Dataset(c) => commands::dataset::run(&ctx, c),
        Command::Mix(c) => commands::mix::run(&ctx, c),
        Command::Infer(a) => commands::infer::run(&ctx, a),
        Command::Evaluate(a) => commands::evaluate::run(&ctx, a),
        Command::Report(a) => commands::report::run(&ctx, a),
        Command::Plan(a) => commands::plan::run(&ctx, a),
        Command::Weights(c) => commands::weights::run(&ctx, c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
