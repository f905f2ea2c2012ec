use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use mixstereo::dataset::{scan_dataset, validate_all, DataKind, DatasetDescriptor, ReaderKind};
use serde::Serialize;

use super::{serde_word, to_json};
use crate::config::load_catalog;
use crate::error::{write_file, CliError};
use crate::Context;

#[derive(Subcommand)]
pub enum DatasetCmd {
    /// Enumerate samples under a root and record the count in the catalog.
    Scan(ScanArgs),
    /// Check every sample of a catalog dataset; exits 1 on any violation.
    Validate(ValidateArgs),
}

#[derive(Args)]
pub struct ScanArgs {
    #[arg(long)]
    root: PathBuf,
    /// Catalog entry to create or update.
    #[arg(long)]
    name: String,
    /// Directory layout (sceneflow, sintel, falling_things, tartanair,
    /// crestereo, instereo2k, kitti, two_view); required for new entries.
    #[arg(long, value_parser = serde_word::<ReaderKind>)]
    reader: Option<ReaderKind>,
    /// Synthetic or Realistic, for new entries.
    #[arg(long = "type", value_parser = serde_word::<DataKind>)]
    kind: Option<DataKind>,
    /// Comma-separated passes to enumerate (Sceneflow, Sintel).
    #[arg(long, value_delimiter = ',')]
    passes: Option<Vec<String>>,
    /// Where to write the updated catalog; defaults to the catalog path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the sample list as JSON.
    #[arg(long)]
    list: Option<PathBuf>,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    name: String,
    /// Overrides the catalog root.
    #[arg(long)]
    root: Option<PathBuf>,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn run(ctx: &Context, cmd: DatasetCmd) -> Result<(), CliError> {
    match cmd {
        DatasetCmd::Scan(a) => scan(ctx, a),
        DatasetCmd::Validate(a) => validate(ctx, a),
    }
}

#[derive(Serialize)]
struct ScanSummary<'a> {
    dataset: &'a str,
    root: &'a std::path::Path,
    count: u64,
    previous_count: Option<u64>,
    per_pass: BTreeMap<String, u64>,
    catalog: &'a std::path::Path,
}

fn scan(ctx: &Context, a: ScanArgs) -> Result<(), CliError> {
    let out = a
        .out
        .clone()
        .or_else(|| ctx.catalog_path.clone())
        .ok_or_else(|| CliError::domain("no catalog to update: pass --catalog, --out or set TOOL_CATALOG"))?;
    let mut catalog = match &ctx.catalog_path {
        Some(p) if p.is_file() => load_catalog(Some(p))?,
        _ => mixstereo::dataset::Catalog::reference(),
    };
    let previous = catalog.get(&a.name).cloned();
    let mut desc = match (&previous, a.reader) {
        (Some(d), reader) => {
            let mut d = d.clone();
            if let Some(r) = reader {
                d.reader = r;
            }
            d
        }
        (None, Some(reader)) => {
            let kind = a.kind.ok_or_else(|| CliError::domain("new dataset needs --type"))?;
            DatasetDescriptor::new(&a.name, kind, 1, reader)
        }
        (None, None) => return Err(CliError::domain(format!("dataset `{}` not in catalog; pass --reader", a.name))),
    };
    if let Some(k) = a.kind {
        desc.kind = k;
    }
    if let Some(p) = a.passes {
        desc.passes = p;
    }
    desc.root = Some(a.root.clone());
    let refs = scan_dataset(&desc)?;
    let mut per_pass = BTreeMap::new();
    for r in &refs {
        *per_pass.entry(r.pass.clone().unwrap_or_else(|| "-".into())).or_insert(0u64) += 1;
    }
    let summary = ScanSummary {
        dataset: &a.name,
        root: &a.root,
        count: refs.len() as u64,
        previous_count: previous.as_ref().map(|d| d.count),
        per_pass,
        catalog: &out,
    };
    print!("{}", to_json(&summary));
    if let Some(list) = &a.list {
        write_file(list, to_json(&refs))?;
    }
    if refs.is_empty() {
        return Err(CliError::domain(format!(
            "no samples found under {}; catalog not updated",
            a.root.display()
        )));
    }
    desc.count = refs.len() as u64;
    catalog.upsert(desc);
    write_file(&out, catalog.to_json() + "\n")
}

#[derive(Serialize)]
struct ValidateSummary<'a> {
    dataset: &'a str,
    samples: usize,
    expected_count: u64,
    count_matches: bool,
    failed: usize,
    reports: Vec<&'a mixstereo::dataset::ValidationReport>,
}

fn validate(ctx: &Context, a: ValidateArgs) -> Result<(), CliError> {
    let catalog = load_catalog(ctx.catalog_path.as_deref())?;
    let mut desc = catalog
        .get(&a.name)
        .cloned()
        .ok_or_else(|| CliError::domain(format!("dataset `{}` not in catalog", a.name)))?;
    if let Some(r) = a.root {
        desc.root = Some(r);
    }
    let refs = scan_dataset(&desc)?;
    let reports = validate_all(&desc, &refs);
    let bad: Vec<_> = reports.iter().filter(|r| !r.is_ok()).collect();
    let summary = ValidateSummary {
        dataset: &desc.name,
        samples: refs.len(),
        expected_count: desc.count,
        count_matches: refs.len() as u64 == desc.count,
        failed: bad.len(),
        reports: bad,
    };
    let text = to_json(&summary);
    print!("{text}");
    if !summary.count_matches {
        eprintln!(
            "note: {} samples on disk, catalog expects {}",
            summary.samples, summary.expected_count
        );
    }
    if let Some(p) = &a.report {
        write_file(p, &text)?;
    }
    if summary.failed > 0 {
        return Err(CliError::domain(format!("{} of {} samples failed validation", summary.failed, summary.samples)));
    }
    Ok(())
}
