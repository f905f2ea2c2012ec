use std::path::PathBuf;

use clap::Args;
use mixstereo::pipeline::{build_manifest, make_schedule, PhaseConfig, ReplicationPolicy};

use crate::config::load_catalog;
use crate::error::{write_file, CliError};
use crate::Context;

#[derive(Args)]
pub struct PlanArgs {
    /// Schedule JSON output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn summary(phase: &PhaseConfig, total: u64) {
    println!(
        "{}: {} steps, batch {}, crop {}x{}, min lr {:e}, policy {}",
        phase.name, phase.steps, phase.batch_size, phase.crop[0], phase.crop[1], phase.min_lr, phase.policy
    );
    let frac = phase.epoch_fraction(total);
    println!("{} covers {frac:.2} epochs of {total} samples", phase.name);
    println!("{} epoch fraction {frac:.4} ({} / {total})", phase.name, phase.samples_consumed());
}

pub fn run(ctx: &Context, a: PlanArgs) -> Result<(), CliError> {
    let schedule = make_schedule();
    for p in [&schedule.pretrain, &schedule.finetune] {
        p.validate().map_err(CliError::domain)?;
    }
    let json = schedule.to_json() + "\n";
    match &a.out {
        Some(p) => write_file(p, &json)?,
        None => print!("{json}"),
    }
    let catalog = load_catalog(ctx.catalog_path.as_deref())?;
    for p in [&schedule.pretrain, &schedule.finetune] {
        let policy = ReplicationPolicy::named(&p.policy, &catalog.datasets)?;
        let total = build_manifest(&catalog, &policy)?.total();
        summary(p, total);
    }
    Ok(())
}
