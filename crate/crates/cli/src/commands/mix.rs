use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use mixstereo::pipeline::{build_manifest, expected_proportions, sample_epoch, TrainingManifest};

use crate::config::{load_catalog, resolve_policy};
use crate::error::CliError;
use crate::Context;

#[derive(Subcommand)]
pub enum MixCmd {
    /// Write the replicated manifest as JSON lines.
    Build(BuildArgs),
    /// Print each dataset's share of the mix.
    Proportions(PolicyArgs),
    /// Print the first entries of a seeded epoch.
    Sample(SampleArgs),
}

#[derive(Args)]
pub struct PolicyArgs {
    /// pretrain, finetune, uniform, or a JSON file of name-to-factor pairs.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
pub struct BuildArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SampleArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    /// Read this manifest instead of building one from the catalog.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    take: usize,
}

pub fn run(ctx: &Context, cmd: MixCmd) -> Result<(), CliError> {
    match cmd {
        MixCmd::Build(a) => build(ctx, a),
        MixCmd::Proportions(a) => proportions(ctx, a),
        MixCmd::Sample(a) => sample(ctx, a),
    }
}

fn manifest_from_catalog(ctx: &Context, policy: &PolicyArgs) -> Result<TrainingManifest, CliError> {
    let catalog = load_catalog(ctx.catalog_path.as_deref())?;
    let policy = resolve_policy(policy.policy.as_deref(), &ctx.config.policy, &catalog)?;
    Ok(build_manifest(&catalog, &policy)?)
}

fn build(ctx: &Context, a: BuildArgs) -> Result<(), CliError> {
    let m = manifest_from_catalog(ctx, &a.policy)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = std::fs::File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    m.write_jsonl(BufWriter::new(file))
        .map_err(|e| CliError::io(&a.out, e))?;
    for (d, n) in m.datasets.iter().zip(m.counts()) {
        println!("{:<16} {:>8} x{:<3} {:>9}", d.name, d.count, d.factor, n);
    }
    println!("total {}", m.total());
    Ok(())
}

fn proportions(ctx: &Context, a: PolicyArgs) -> Result<(), CliError> {
    let catalog = load_catalog(ctx.catalog_path.as_deref())?;
    let policy = resolve_policy(a.policy.as_deref(), &ctx.config.policy, &catalog)?;
    for (name, share) in expected_proportions(&catalog, &policy)? {
        println!("{name:<16} {share:.4}");
    }
    Ok(())
}

fn sample(ctx: &Context, a: SampleArgs) -> Result<(), CliError> {
    let m = match &a.manifest {
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| CliError::io(p, e))?;
            TrainingManifest::read_jsonl(std::io::BufReader::new(file)).map_err(|e| match e {
                mixstereo::pipeline::PipelineError::Io(io) => CliError::io(p, io),
                other => CliError::domain(format!("{}: {other}", p.display())),
            })?
        }
        None => manifest_from_catalog(ctx, &a.policy)?,
    };
    let seed = a.seed.unwrap_or(ctx.config.seed);
    for e in sample_epoch(&m, seed).take(a.take) {
        println!("{}", m.entry_json(e));
    }
    Ok(())
}
