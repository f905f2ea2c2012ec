//! Markdown and CSV rendering of benchmark tables.
//!
//! Every column is ranked independently within a group of rows, lower is
//! better, on values rounded to two decimals. All entries tied for best are
//! bold. When the best is unique, the entries at the next value are
//! underlined. A column with fewer than two values gets no emphasis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{fg_bg_ratio, round2, EvalResult, Resolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// One column per (dataset, resolution, metric) over all pixels.
    Table2,
    /// all / background / foreground / ratio columns.
    Table3,
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "table2" => Ok(Layout::Table2),
            "table3" => Ok(Layout::Table3),
            other => Err(format!("unknown layout `{other}` (table2, table3)")),
        }
    }
}

pub const REGION_ALL: &str = "all";
pub const REGION_BG: &str = "backgr.";
pub const REGION_FG: &str = "foregr.";
pub const REGION_RATIO: &str = "foregr./backgr.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub dataset: String,
    pub resolution: String,
    pub region: String,
    pub metric: String,
    /// `None` renders as `-`, e.g. a foreground score on an image without
    /// foreground.
    pub value: Option<f64>,
}

impl ReportCell {
    fn key(&self) -> (&str, &str, &str, &str) {
        (&self.dataset, &self.resolution, &self.region, &self.metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    /// Rows are ranked against rows with the same group only.
    pub group: usize,
    pub cells: Vec<ReportCell>,
}

pub fn metric_name(tau: f64) -> String {
    format!("bad {tau:.1}")
}

impl MethodRow {
    pub fn new(method: &str, group: usize) -> Self {
        Self {
            method: method.to_string(),
            group,
            cells: Vec::new(),
        }
    }

    pub fn push(&mut self, dataset: &str, resolution: &str, region: &str, metric: &str, value: Option<f64>) {
        self.cells.push(ReportCell {
            dataset: dataset.to_string(),
            resolution: resolution.to_string(),
            region: region.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    /// Appends the cells `layout` shows for one evaluation.
    pub fn add_result(&mut self, dataset: &str, resolution: Resolution, result: &EvalResult, layout: Layout) {
        let res = resolution.name();
        match layout {
            Layout::Table2 => {
                for s in &result.all.bad {
                    self.push(dataset, res, REGION_ALL, &metric_name(s.tau), Some(s.percent));
                }
                self.push(dataset, res, REGION_ALL, "avgerr", Some(result.all.avgerr));
            }
            Layout::Table3 => {
                for s in &result.all.bad {
                    let m = metric_name(s.tau);
                    let bg = result.background.as_ref().and_then(|r| r.bad_at(s.tau));
                    let fg = result.foreground.as_ref().and_then(|r| r.bad_at(s.tau));
                    let ratio = match (fg, bg) {
                        (Some(f), Some(b)) => fg_bg_ratio(f, b).ok(),
                        _ => None,
                    };
                    self.push(dataset, res, REGION_ALL, &m, Some(s.percent));
                    self.push(dataset, res, REGION_BG, &m, bg);
                    self.push(dataset, res, REGION_FG, &m, fg);
                    self.push(dataset, res, REGION_RATIO, &m, ratio);
                }
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("nothing to report")]
    Empty,
    #[error("method `{method}` has a different metric set than `{reference}`")]
    InconsistentMetrics { method: String, reference: String },
    #[error("method `{method}` repeats column {column}")]
    DuplicateColumn { method: String, column: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub markdown: String,
    pub csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    None,
    Best,
    Second,
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn column_label(cell: &ReportCell, layout: Layout, single_block: bool) -> String {
    let mut parts = vec![cell.dataset.clone()];
    if cell.resolution != Resolution::Full.name() {
        parts.push(capitalise(&cell.resolution));
    }
    match layout {
        Layout::Table2 => parts.push(cell.metric.clone()),
        Layout::Table3 if single_block => return cell.region.clone(),
        Layout::Table3 => {
            parts.push(cell.metric.clone());
            parts.push(cell.region.clone());
        }
    }
    parts.join(" ")
}

fn ranks(values: &[Option<f64>]) -> Vec<Mark> {
    let rounded: Vec<Option<f64>> = values.iter().map(|v| v.map(round2)).collect();
    let mut sorted: Vec<f64> = rounded.iter().flatten().copied().collect();
    let mut marks = vec![Mark::None; values.len()];
    if sorted.len() < 2 {
        return marks;
    }
    sorted.sort_by(f64::total_cmp);
    let best = sorted[0];
    let best_count = sorted.iter().filter(|&&v| v == best).count();
    let second = (best_count == 1).then(|| sorted[1]);
    for (m, v) in marks.iter_mut().zip(&rounded) {
        match *v {
            Some(x) if x == best => *m = Mark::Best,
            Some(x) if Some(x) == second => *m = Mark::Second,
            _ => {}
        }
    }
    marks
}

fn fmt_cell(v: Option<f64>, mark: Mark) -> String {
    let Some(v) = v else { return "-".into() };
    let s = format!("{:.2}", round2(v));
    match mark {
        Mark::None => s,
        Mark::Best => format!("**{s}**"),
        Mark::Second => format!("<u>{s}</u>"),
    }
}

/// Renders rows in the given order. Groups appear as separate markdown
/// tables, in order of first appearance.
pub fn render_report(rows: &[MethodRow], layout: Layout) -> Result<Report, ReportError> {
    let first = rows.first().ok_or(ReportError::Empty)?;
    let columns: Vec<&ReportCell> = first.cells.iter().collect();
    if columns.is_empty() {
        return Err(ReportError::Empty);
    }
    // per row, the cell for each column
    let mut table: Vec<Vec<Option<f64>>> = Vec::with_capacity(rows.len());
    for row in rows {
        let mut keys: Vec<_> = row.cells.iter().map(ReportCell::key).collect();
        keys.sort();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(ReportError::DuplicateColumn {
                method: row.method.clone(),
                column: format!("{:?}", w[0]),
            });
        }
        if row.cells.len() != columns.len() {
            return Err(ReportError::InconsistentMetrics {
                method: row.method.clone(),
                reference: first.method.clone(),
            });
        }
        let mut vals = Vec::with_capacity(columns.len());
        for col in &columns {
            let cell = row.cells.iter().find(|c| c.key() == col.key()).ok_or_else(|| {
                ReportError::InconsistentMetrics {
                    method: row.method.clone(),
                    reference: first.method.clone(),
                }
            })?;
            vals.push(cell.value);
        }
        table.push(vals);
    }

    let mut blocks: Vec<(&str, &str, &str)> = columns.iter().map(|c| (&*c.dataset, &*c.resolution, &*c.metric)).collect();
    blocks.dedup();
    let single_block = blocks.len() == 1;
    let header: Vec<String> = columns.iter().map(|c| column_label(c, layout, single_block)).collect();

    let mut groups: Vec<usize> = Vec::new();
    for r in rows {
        if !groups.contains(&r.group) {
            groups.push(r.group);
        }
    }
    let mut marks = vec![vec![Mark::None; columns.len()]; rows.len()];
    for &g in &groups {
        let members: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].group == g).collect();
        for c in 0..columns.len() {
            let vals: Vec<Option<f64>> = members.iter().map(|&i| table[i][c]).collect();
            for (&i, m) in members.iter().zip(ranks(&vals)) {
                marks[i][c] = m;
            }
        }
    }

    let mut md = String::new();
    for (gi, &g) in groups.iter().enumerate() {
        if gi > 0 {
            md.push('\n');
        }
        md.push_str("| Method | ");
        md.push_str(&header.join(" | "));
        md.push_str(" |\n|:--|");
        md.push_str(&"--:|".repeat(columns.len()));
        md.push('\n');
        for (i, row) in rows.iter().enumerate().filter(|(_, r)| r.group == g) {
            let cells: Vec<String> = (0..columns.len()).map(|c| fmt_cell(table[i][c], marks[i][c])).collect();
            md.push_str(&format!("| {} | {} |\n", row.method, cells.join(" | ")));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "dataset", "resolution", "region", "metric", "value"]).expect("in-memory CSV");
    for (i, row) in rows.iter().enumerate() {
        for (c, col) in columns.iter().enumerate() {
            let value = table[i][c].map(|v| v.to_string()).unwrap_or_default();
            w.write_record([&row.method, &col.dataset, &col.resolution, &col.region, &col.metric, &value])
                .expect("in-memory CSV");
        }
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8");
    Ok(Report { markdown: md, csv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, group: usize, vals: &[f64]) -> MethodRow {
        let mut r = MethodRow::new(method, group);
        for (i, &v) in vals.iter().enumerate() {
            r.push("D", "full", REGION_ALL, &format!("m{i}"), Some(v));
        }
        r
    }

    #[test]
    fn single_method_has_no_markers() {
        let r = render_report(&[row("A", 0, &[1.0, 2.0])], Layout::Table2).unwrap();
        assert!(!r.markdown.contains("**") && !r.markdown.contains("<u>"));
    }

    #[test]
    fn ties_bold_both_and_skip_underline() {
        let r = render_report(&[row("A", 0, &[1.0]), row("B", 0, &[1.0]), row("C", 0, &[2.0])], Layout::Table2).unwrap();
        assert_eq!(r.markdown.matches("**1.00**").count(), 2);
        assert!(!r.markdown.contains("<u>"));
    }

    #[test]
    fn ranking_uses_rounded_values() {
        let r = render_report(&[row("A", 0, &[1.004]), row("B", 0, &[0.996])], Layout::Table2).unwrap();
        assert_eq!(r.markdown.matches("**1.00**").count(), 2);
    }

    #[test]
    fn groups_rank_independently() {
        let rows = [row("A", 0, &[1.0]), row("B", 0, &[2.0]), row("C", 1, &[5.0]), row("D", 1, &[6.0])];
        let md = render_report(&rows, Layout::Table2).unwrap().markdown;
        assert!(md.contains("| C | **5.00** |"));
        assert!(md.contains("| D | <u>6.00</u> |"));
        assert_eq!(md.matches("| Method |").count(), 2);
    }

    #[test]
    fn inconsistent_metrics_rejected() {
        let mut b = row("B", 0, &[1.0]);
        b.cells[0].metric = "other".into();
        assert!(matches!(
            render_report(&[row("A", 0, &[1.0]), b], Layout::Table2),
            Err(ReportError::InconsistentMetrics { .. })
        ));
        assert_eq!(render_report(&[], Layout::Table2), Err(ReportError::Empty));
    }

    #[test]
    fn csv_schema_and_quoting() {
        let csv = render_report(&[row("A, b", 0, &[1.5])], Layout::Table2).unwrap().csv;
        assert_eq!(csv, "method,dataset,resolution,region,metric,value\n\"A, b\",D,full,all,m0,1.5\n");
    }

    #[test]
    fn undefined_cells_render_as_dash() {
        let mut a = MethodRow::new("A", 0);
        a.push("K", "full", REGION_FG, "bad 3.0", None);
        let mut b = MethodRow::new("B", 0);
        b.push("K", "full", REGION_FG, "bad 3.0", Some(2.0));
        let r = render_report(&[a, b], Layout::Table3).unwrap();
        assert!(r.markdown.contains("| Method | foregr. |"));
        assert!(r.markdown.contains("| A | - |"));
        assert!(r.markdown.contains("| B | 2.00 |"));
    }
}
