use std::path::PathBuf;

use clap::{Args, Subcommand};
use mixstereo::model::ModelWeights;

use crate::config::resolve_arch;
use crate::error::{write_file, CliError};
use crate::Context;

#[derive(Subcommand)]
pub enum WeightsCmd {
    /// Write randomly initialised weights for an architecture.
    Init(InitArgs),
}

#[derive(Args)]
pub struct InitArgs {
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(ctx: &Context, cmd: WeightsCmd) -> Result<(), CliError> {
    match cmd {
        WeightsCmd::Init(a) => {
            let arch = resolve_arch(a.arch.as_deref().unwrap_or(&ctx.config.arch))?;
            let w = ModelWeights::random(&arch, a.seed.unwrap_or(ctx.config.seed))?;
            write_file(&a.out, w.to_bytes())?;
            println!("wrote {}", a.out.display());
            Ok(())
        }
    }
}
