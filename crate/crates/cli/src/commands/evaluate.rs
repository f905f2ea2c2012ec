use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use mixstereo::dataset::{read_object_map, read_pfm, read_png16_disparity};
use mixstereo::eval::{
    default_threshold, evaluate_set, render_report, EvalItem, EvalResult, Layout, MethodRow, Resolution,
};
use mixstereo::DisparityMap;
use serde::{Deserialize, Serialize};

use super::to_json;
use crate::error::{read_file, write_file, CliError};
use crate::Context;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Directory of predicted disparity maps (.pfm or 16-bit .png).
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth maps, matched to predictions by file stem.
    #[arg(long)]
    gt: PathBuf,
    /// Benchmark name; picks the default threshold (KITTI 3, Middlebury 2, ETH3D 1).
    #[arg(long, default_value = "custom")]
    dataset: String,
    /// Comma-separated bad-pixel thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    /// Directory of object maps (nonzero = foreground), matched by stem.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// full, half or quarter; ground truth is downscaled to match.
    #[arg(long, default_value = "full")]
    resolution: Resolution,
    /// Divisor applied to 16-bit PNG disparity values.
    #[arg(long, default_value_t = 256.0)]
    png_divisor: f32,
    #[arg(long, default_value = "method")]
    method: String,
    /// Directory for results.md, results.csv, results.json and per_image.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// The file the `report` command combines.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultFile {
    pub method: String,
    pub dataset: String,
    pub resolution: Resolution,
    pub result: EvalResult,
}

fn list_maps(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in rd {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("pfm" | "png")) || !p.is_file() {
            continue;
        }
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if let Some(prev) = out.insert(stem.clone(), p.clone()) {
            return Err(CliError::domain(format!(
                "{} and {} share the stem `{stem}`",
                prev.display(),
                p.display()
            )));
        }
    }
    Ok(out)
}

fn load_map(path: &Path, divisor: f32) -> Result<DisparityMap, CliError> {
    let bytes = read_file(path)?;
    let r = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pfm")) {
        read_pfm(&bytes)
    } else {
        read_png16_disparity(&bytes, divisor)
    };
    r.map_err(|e| CliError::domain(format!("{}: {e}", path.display())))
}

pub fn run(_ctx: &Context, a: EvaluateArgs) -> Result<(), CliError> {
    let preds = list_maps(&a.pred)?;
    let gts = list_maps(&a.gt)?;
    let orphan_preds: Vec<_> = preds.keys().filter(|k| !gts.contains_key(*k)).collect();
    let orphan_gts: Vec<_> = gts.keys().filter(|k| !preds.contains_key(*k)).collect();
    if !orphan_preds.is_empty() || !orphan_gts.is_empty() {
        let mut msg = String::from("prediction and ground-truth files do not match");
        for k in &orphan_preds {
            msg += &format!("\n  no ground truth for {}", preds[*k].display());
        }
        for k in &orphan_gts {
            msg += &format!("\n  no prediction for {}", gts[*k].display());
        }
        return Err(CliError::domain(msg));
    }
    if preds.is_empty() {
        return Err(CliError::domain(format!("no .pfm or .png maps in {}", a.pred.display())));
    }

    let thresholds = a
        .thresholds
        .clone()
        .or_else(|| default_threshold(&a.dataset).map(|t| vec![t]))
        .unwrap_or_else(|| vec![1.0, 2.0, 3.0]);

    let mut loaded = Vec::with_capacity(preds.len());
    for (id, p) in &preds {
        let pred = load_map(p, a.png_divisor)?;
        let gt = a.resolution.prepare_gt(&load_map(&gts[id], a.png_divisor)?);
        let region = match &a.regions {
            Some(dir) => {
                let path = dir.join(format!("{id}.png"));
                let bytes = read_file(&path)?;
                let mask = read_object_map(&bytes).map_err(|e| CliError::domain(format!("{}: {e}", path.display())))?;
                Some(a.resolution.prepare_region(&mask))
            }
            None => None,
        };
        loaded.push((id.clone(), pred, gt, region));
    }
    let mut items: Vec<EvalItem<'_>> = loaded
        .iter()
        .map(|(id, pred, gt, region)| EvalItem {
            id: id.clone(),
            pred,
            gt,
            region: region.as_ref(),
        })
        .collect();
    let regions = a.regions.is_some();
    let (per_image, pooled) =
        evaluate_set(&mut items, &thresholds, regions).map_err(|e| CliError::domain(e.to_string()))?;

    let layout = if regions { Layout::Table3 } else { Layout::Table2 };
    let mut row = MethodRow::new(&a.method, 0);
    row.add_result(&a.dataset, a.resolution, &pooled, layout);
    let report = render_report(&[row], layout)?;
    print!("{}", report.markdown);

    if let Some(dir) = &a.out {
        write_file(&dir.join("results.md"), &report.markdown)?;
        write_file(&dir.join("results.csv"), &report.csv)?;
        let rf = ResultFile {
            method: a.method.clone(),
            dataset: a.dataset.clone(),
            resolution: a.resolution,
            result: pooled,
        };
        write_file(&dir.join("results.json"), to_json(&rf))?;
        write_file(&dir.join("per_image.csv"), per_image_csv(&per_image, &thresholds))?;
    }
    Ok(())
}

fn per_image_csv(rows: &[(String, EvalResult)], thresholds: &[f64]) -> String {
    let mut taus = thresholds.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    for region in ["all", "background", "foreground"] {
        for t in &taus {
            header.push(format!("{region} bad {t:.1}"));
        }
        header.push(format!("{region} avgerr"));
        header.push(format!("{region} pixels"));
    }
    w.write_record(&header).expect("in-memory CSV");
    for (id, r) in rows {
        let mut rec = vec![id.clone()];
        for s in [Some(&r.all), r.background.as_ref(), r.foreground.as_ref()] {
            for &t in &taus {
                rec.push(s.and_then(|s| s.bad_at(t)).map(|v| v.to_string()).unwrap_or_default());
            }
            rec.push(s.map(|s| s.avgerr.to_string()).unwrap_or_default());
            rec.push(s.map(|s| s.pixels.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}
