use std::path::PathBuf;

use clap::Args;
use mixstereo::eval::{render_report, Layout, MethodRow};

use super::evaluate::ResultFile;
use crate::error::{read_file, write_file, CliError};
use crate::Context;

#[derive(Args)]
pub struct ReportArgs {
    /// results.json files written by `evaluate --out`.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// table2 (all pixels per benchmark) or table3 (background/foreground split).
    #[arg(long, default_value = "table2")]
    layout: Layout,
    /// Markdown output; the CSV goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(_ctx: &Context, a: ReportArgs) -> Result<(), CliError> {
    let mut rows: Vec<MethodRow> = Vec::new();
    for path in &a.results {
        let bytes = read_file(path)?;
        let rf: ResultFile =
            serde_json::from_slice(&bytes).map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?;
        if a.layout == Layout::Table3 && rf.result.foreground.is_none() {
            return Err(CliError::domain(format!(
                "{}: table3 needs results evaluated with --regions",
                path.display()
            )));
        }
        let idx = match rows.iter().position(|r| r.method == rf.method) {
            Some(i) => i,
            None => {
                rows.push(MethodRow::new(&rf.method, 0));
                rows.len() - 1
            }
        };
        rows[idx].add_result(&rf.dataset, rf.resolution, &rf.result, a.layout);
    }
    let report = render_report(&rows, a.layout)?;
    print!("{}", report.markdown);
    if let Some(out) = &a.out {
        write_file(out, &report.markdown)?;
        write_file(&out.with_extension("csv"), &report.csv)?;
    }
    Ok(())
}
