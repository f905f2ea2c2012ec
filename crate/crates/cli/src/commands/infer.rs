use std::path::PathBuf;

use clap::Args;
use mixstereo::colormap::colorize_png;
use mixstereo::dataset::{load_rgb, write_pfm};
use mixstereo::model::{infer, ModelWeights};

use crate::config::resolve_arch;
use crate::error::{read_file, write_file, CliError};
use crate::Context;

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Weight file. Without one, weights are drawn at random from --seed.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// standard, small, or an architecture JSON file.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output PFM; the colour map is written next to it as PNG.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(ctx: &Context, a: InferArgs) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let arch = resolve_arch(a.arch.as_deref().unwrap_or(&cfg.arch))?;
    let weights = match a.weights.as_ref().or(cfg.weights.as_ref()) {
        Some(p) => {
            let bytes = read_file(p)?;
            ModelWeights::from_bytes(&bytes, &arch).map_err(|e| CliError::domain(format!("{}: {e}", p.display())))?
        }
        None => {
            let seed = a.seed.unwrap_or(cfg.seed);
            eprintln!("note: no weights given, using random weights (seed {seed})");
            ModelWeights::random(&arch, seed)?
        }
    };
    let left = load_rgb(&a.left)?;
    let right = load_rgb(&a.right)?;
    let iters = a.iters.unwrap_or(cfg.iters);
    let disp = infer(&left, &right, &weights, iters)?;

    write_file(&a.out, write_pfm(&disp))?;
    let png = a.out.with_extension("png");
    write_file(&png, colorize_png(&disp))?;
    let (w, h) = disp.dims();
    match disp.stats() {
        Some((min, max, mean)) => println!("{w}x{h} disparity: min {min:.4} max {max:.4} mean {mean:.4}"),
        None => println!("{w}x{h} disparity: no valid pixels"),
    }
    println!("wrote {} and {}", a.out.display(), png.display());
    Ok(())
}
