//! Benchmark metrics: end-point error, bad-τ, avgerr and the
//! foreground/background split.
//!
//! Aggregation over several images pools pixels: counts and error sums are
//! accumulated in sorted sample-id order, so results do not depend on the
//! order images were processed in.

mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disparity::DisparityMap;

pub use report::{render_report, Layout, MethodRow, Report, ReportCell, ReportError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("size mismatch: prediction {pred:?}, ground truth {gt:?}")]
    DimensionMismatch { pred: (usize, usize), gt: (usize, usize) },
    #[error("no valid pixels to evaluate")]
    NoValidPixels,
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("background error is zero; ratio undefined")]
    ZeroBackground,
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Per-pixel `|pred - gt|` on ground-truth-valid pixels.
///
/// A valid ground-truth pixel whose prediction is invalid or non-finite
/// counts as an infinite error rather than being dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct EpeMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl EpeMap {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v)
    }
}

pub fn end_point_error(pred: &DisparityMap, gt: &DisparityMap) -> Result<EpeMap> {
    if pred.dims() != gt.dims() {
        return Err(EvalError::DimensionMismatch {
            pred: pred.dims(),
            gt: gt.dims(),
        });
    }
    let n = gt.data().len();
    let mut values = vec![0.0; n];
    let valid = gt.mask().to_vec();
    for i in 0..n {
        if !valid[i] {
            continue;
        }
        let p = pred.data()[i];
        values[i] = if pred.mask()[i] && p.is_finite() {
            (p as f64 - gt.data()[i] as f64).abs()
        } else {
            f64::INFINITY
        };
    }
    Ok(EpeMap {
        width: gt.width(),
        height: gt.height(),
        values,
        valid,
    })
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(EvalError::BadThreshold(tau))
    }
}

/// Percentage of valid pixels with `epe > tau` (strict).
pub fn bad_tau(epe: &EpeMap, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let n = epe.valid_count();
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    let bad = epe.valid_values().filter(|&e| e > tau).count();
    Ok(100.0 * bad as f64 / n as f64)
}

/// Mean end-point error over valid pixels.
pub fn avg_err(epe: &EpeMap) -> Result<f64> {
    let n = epe.valid_count();
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    Ok(epe.valid_values().sum::<f64>() / n as f64)
}

/// KITTI D1: percentage of valid pixels with `epe > 3` and
/// `epe > 0.05 * |gt|`. Not the same as bad 3.0.
pub fn d1_all(pred: &DisparityMap, gt: &DisparityMap) -> Result<f64> {
    let epe = end_point_error(pred, gt)?;
    let n = epe.valid_count();
    if n == 0 {
        return Err(EvalError::NoValidPixels);
    }
    let bad = (0..gt.data().len())
        .filter(|&i| epe.valid[i] && epe.values[i] > 3.0 && epe.values[i] > 0.05 * (gt.data()[i] as f64).abs())
        .count();
    Ok(100.0 * bad as f64 / n as f64)
}

/// Foreground/background labels; KITTI object-map pixels `> 0` are
/// foreground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    width: usize,
    height: usize,
    foreground: Vec<bool>,
}

impl RegionMask {
    /// Panics if `foreground.len() != width * height`.
    pub fn new(width: usize, height: usize, foreground: Vec<bool>) -> Self {
        assert_eq!(foreground.len(), width * height, "region mask size");
        Self {
            width,
            height,
            foreground,
        }
    }

    pub fn all_background(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn foreground(&self) -> &[bool] {
        &self.foreground
    }
}

/// bad-τ over all valid pixels and restricted to each region. A region
/// without valid pixels is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionScores {
    pub all: f64,
    pub background: Option<f64>,
    pub foreground: Option<f64>,
}

pub fn region_eval(epe: &EpeMap, region: &RegionMask, tau: f64) -> Result<RegionScores> {
    check_tau(tau)?;
    if (region.width, region.height) != (epe.width, epe.height) {
        return Err(EvalError::DimensionMismatch {
            pred: (region.width, region.height),
            gt: (epe.width, epe.height),
        });
    }
    // [bad, total] for background, foreground
    let mut counts = [[0u64; 2]; 2];
    for ((&e, &ok), &fg) in epe.values.iter().zip(&epe.valid).zip(&region.foreground) {
        if ok {
            let c = &mut counts[fg as usize];
            c[0] += (e > tau) as u64;
            c[1] += 1;
        }
    }
    let total = counts[0][1] + counts[1][1];
    if total == 0 {
        return Err(EvalError::NoValidPixels);
    }
    let pct = |c: [u64; 2]| (c[1] > 0).then(|| 100.0 * c[0] as f64 / c[1] as f64);
    Ok(RegionScores {
        all: 100.0 * (counts[0][0] + counts[1][0]) as f64 / total as f64,
        background: pct(counts[0]),
        foreground: pct(counts[1]),
    })
}

/// `foreground / background`, at full precision.
pub fn fg_bg_ratio(foreground: f64, background: f64) -> Result<f64> {
    if background.is_nan() || background <= 0.0 {
        return Err(EvalError::ZeroBackground);
    }
    Ok(foreground / background)
}

/// Rounds half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Evaluation resolution. Ground truth is downscaled by the factor with
/// disparity divided by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Full,
    Half,
    Quarter,
}

impl Resolution {
    pub fn factor(self) -> usize {
        match self {
            Resolution::Full => 1,
            Resolution::Half => 2,
            Resolution::Quarter => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Resolution::Full => "full",
            Resolution::Half => "half",
            Resolution::Quarter => "quarter",
        }
    }

    pub fn prepare_gt(self, gt: &DisparityMap) -> DisparityMap {
        match self {
            Resolution::Full => gt.clone(),
            r => gt.downscale(r.factor()),
        }
    }

    pub fn prepare_region(self, region: &RegionMask) -> RegionMask {
        let f = self.factor();
        if f == 1 {
            return region.clone();
        }
        let w = region.width.div_ceil(f);
        let h = region.height.div_ceil(f);
        let mut fg = Vec::with_capacity(w * h);
        for y in 0..h {
            let sy = (y * f + f / 2).min(region.height - 1);
            for x in 0..w {
                let sx = (x * f + f / 2).min(region.width - 1);
                fg.push(region.foreground[sy * region.width + sx]);
            }
        }
        RegionMask::new(w, h, fg)
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Resolution::Full),
            "half" => Ok(Resolution::Half),
            "quarter" => Ok(Resolution::Quarter),
            other => Err(format!("unknown resolution `{other}` (full, half, quarter)")),
        }
    }
}

/// The bad-τ threshold each benchmark reports: 3 px for KITTI, 2 px for
/// Middlebury, 1 px for ETH3D.
pub fn default_threshold(dataset: &str) -> Option<f64> {
    let d = dataset.to_ascii_lowercase();
    if d.starts_with("kitti") {
        Some(3.0)
    } else if d.starts_with("middlebury") {
        Some(2.0)
    } else if d.starts_with("eth3d") {
        Some(1.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScore {
    pub tau: f64,
    pub percent: f64,
}

/// bad-τ for every threshold plus avgerr over one set of pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub bad: Vec<ThresholdScore>,
    pub avgerr: f64,
    pub pixels: u64,
}

impl Scores {
    pub fn bad_at(&self, tau: f64) -> Option<f64> {
        self.bad.iter().find(|s| s.tau == tau).map(|s| s.percent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub all: Scores,
    /// Fraction of ground-truth pixels that were evaluated.
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub foreground: Option<Scores>,
    pub samples: usize,
}

impl EvalResult {
    pub fn thresholds(&self) -> Vec<f64> {
        self.all.bad.iter().map(|s| s.tau).collect()
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    bad: Vec<u64>,
    sum: f64,
    n: u64,
}

impl Tally {
    fn new(k: usize) -> Self {
        Self {
            bad: vec![0; k],
            sum: 0.0,
            n: 0,
        }
    }

    fn add(&mut self, e: f64, taus: &[f64]) {
        for (b, &t) in self.bad.iter_mut().zip(taus) {
            *b += (e > t) as u64;
        }
        self.sum += e;
        self.n += 1;
    }

    fn scores(&self, taus: &[f64]) -> Option<Scores> {
        (self.n > 0).then(|| Scores {
            bad: taus
                .iter()
                .zip(&self.bad)
                .map(|(&tau, &b)| ThresholdScore {
                    tau,
                    percent: 100.0 * b as f64 / self.n as f64,
                })
                .collect(),
            avgerr: self.sum / self.n as f64,
            pixels: self.n,
        })
    }
}

/// Pixel-pooled accumulation of metrics over images.
#[derive(Debug, Clone)]
pub struct Evaluator {
    taus: Vec<f64>,
    regions: bool,
    all: Tally,
    bg: Tally,
    fg: Tally,
    total_pixels: u64,
    samples: usize,
}

impl Evaluator {
    /// Thresholds are sorted ascending and deduplicated.
    pub fn new(thresholds: &[f64], regions: bool) -> Result<Self> {
        let mut taus = thresholds.to_vec();
        for &t in &taus {
            check_tau(t)?;
        }
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let k = taus.len();
        Ok(Self {
            taus,
            regions,
            all: Tally::new(k),
            bg: Tally::new(k),
            fg: Tally::new(k),
            total_pixels: 0,
            samples: 0,
        })
    }

    pub fn add(&mut self, epe: &EpeMap, region: Option<&RegionMask>) -> Result<()> {
        if let Some(r) = region {
            if (r.width, r.height) != (epe.width, epe.height) {
                return Err(EvalError::DimensionMismatch {
                    pred: (r.width, r.height),
                    gt: (epe.width, epe.height),
                });
            }
        }
        for i in 0..epe.values.len() {
            if !epe.valid[i] {
                continue;
            }
            let e = epe.values[i];
            self.all.add(e, &self.taus);
            if self.regions {
                let fg = region.is_some_and(|r| r.foreground[i]);
                if fg { &mut self.fg } else { &mut self.bg }.add(e, &self.taus);
            }
        }
        self.total_pixels += epe.values.len() as u64;
        self.samples += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<EvalResult> {
        let all = self.all.scores(&self.taus).ok_or(EvalError::NoValidPixels)?;
        Ok(EvalResult {
            all,
            density: self.all.n as f64 / self.total_pixels.max(1) as f64,
            background: if self.regions { self.bg.scores(&self.taus) } else { None },
            foreground: if self.regions { self.fg.scores(&self.taus) } else { None },
            samples: self.samples,
        })
    }
}

/// One image of an evaluation run.
pub struct EvalItem<'a> {
    pub id: String,
    pub pred: &'a DisparityMap,
    pub gt: &'a DisparityMap,
    pub region: Option<&'a RegionMask>,
}

/// Per-image and pooled results, ordered by sample id. Images are scored in
/// parallel; pooling runs sequentially in id order.
pub fn evaluate_set(
    items: &mut [EvalItem<'_>],
    thresholds: &[f64],
    regions: bool,
) -> Result<(Vec<(String, EvalResult)>, EvalResult)> {
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let scored: Vec<(EpeMap, EvalResult)> = items
        .par_iter()
        .map(|it| {
            let epe = end_point_error(it.pred, it.gt)?;
            let mut one = Evaluator::new(thresholds, regions)?;
            one.add(&epe, it.region)?;
            let r = one.finish()?;
            Ok((epe, r))
        })
        .collect::<Result<_>>()?;
    let mut pooled = Evaluator::new(thresholds, regions)?;
    let mut per_image = Vec::with_capacity(items.len());
    for (it, (epe, r)) in items.iter().zip(scored) {
        pooled.add(&epe, it.region)?;
        per_image.push((it.id.clone(), r));
    }
    Ok((per_image, pooled.finish()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn epe(values: Vec<f64>, valid: Vec<bool>) -> EpeMap {
        EpeMap {
            width: values.len(),
            height: 1,
            values,
            valid,
        }
    }

    #[test]
    fn epe_examples() {
        let gt = DisparityMap::from_values(3, 1, vec![1.0, 2.0, 3.0]);
        let e = end_point_error(&gt, &gt).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
        let pred = DisparityMap::from_values(3, 1, vec![3.5, 4.5, 5.5]);
        assert!(end_point_error(&pred, &gt).unwrap().values.iter().all(|&v| v == 2.5));
        let wrong = DisparityMap::filled(2, 1, 0.0);
        assert!(matches!(end_point_error(&wrong, &gt), Err(EvalError::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_prediction_counts_as_wrong() {
        let gt = DisparityMap::filled(2, 1, 1.0);
        let pred = DisparityMap::with_mask(2, 1, vec![1.0, 1.0], vec![true, false]);
        let e = end_point_error(&pred, &gt).unwrap();
        assert_eq!(bad_tau(&e, 3.0).unwrap(), 50.0);
    }

    #[test]
    fn bad_tau_examples() {
        assert_eq!(bad_tau(&epe(vec![0.0; 4], vec![true; 4]), 3.0).unwrap(), 0.0);
        assert_eq!(bad_tau(&epe(vec![5.0, 5.0, 0.0, 1.0], vec![true; 4]), 3.0).unwrap(), 50.0);
        // strict inequality
        assert_eq!(bad_tau(&epe(vec![3.0], vec![true]), 3.0).unwrap(), 0.0);
        assert_eq!(bad_tau(&epe(vec![1.0], vec![false]), 3.0), Err(EvalError::NoValidPixels));
        assert!(bad_tau(&epe(vec![1.0], vec![true]), 0.0).is_err());
    }

    #[test]
    fn avg_err_examples() {
        assert!((avg_err(&epe(vec![1.10; 5], vec![true; 5])).unwrap() - 1.10).abs() < 1e-12);
        assert_eq!(avg_err(&epe(vec![9.0, 7.0, 2.0], vec![false, true, false])).unwrap(), 7.0);
    }

    #[test]
    fn region_examples() {
        let e = epe(vec![4.0, 0.0, 0.0, 4.0], vec![true; 4]);
        let bg = RegionMask::all_background(4, 1);
        let r = region_eval(&e, &bg, 3.0).unwrap();
        assert_eq!(r.background, Some(r.all));
        assert_eq!(r.foreground, None);

        let m = RegionMask::new(4, 1, vec![true, false, false, true]);
        let r = region_eval(&e, &m, 3.0).unwrap();
        assert_eq!((r.all, r.background, r.foreground), (50.0, Some(0.0), Some(100.0)));
    }

    #[test]
    fn weighted_mean_of_published_rates() {
        let all = (3.0 * 1.75 + 2.89) / 4.0;
        assert!((all - 2.035f64).abs() < 1e-12);
    }

    #[test]
    fn d1_differs_from_bad3() {
        // epe 4 on gt 100 passes bad 3 but not the 5% relative test
        let gt = DisparityMap::from_values(2, 1, vec![100.0, 10.0]);
        let pred = DisparityMap::from_values(2, 1, vec![104.0, 14.0]);
        assert_eq!(bad_tau(&end_point_error(&pred, &gt).unwrap(), 3.0).unwrap(), 100.0);
        assert_eq!(d1_all(&pred, &gt).unwrap(), 50.0);
    }

    #[test]
    fn ratio_and_rounding() {
        assert_eq!(round2(fg_bg_ratio(2.89, 1.75).unwrap()), 1.65);
        assert_eq!(round2(fg_bg_ratio(3.03, 1.88).unwrap()), 1.61);
        assert_eq!(round2(fg_bg_ratio(2.91, 1.40).unwrap()), 2.08);
        assert_eq!(round2(0.125), 0.13);
        assert_eq!(round2(-0.125), -0.13);
        assert_eq!(fg_bg_ratio(1.0, 0.0), Err(EvalError::ZeroBackground));
    }

    #[test]
    fn pooled_aggregation_is_order_independent() {
        let gt1 = DisparityMap::filled(2, 1, 1.0);
        let gt2 = DisparityMap::filled(3, 1, 1.0);
        let p1 = DisparityMap::filled(2, 1, 5.0);
        let p2 = DisparityMap::from_values(3, 1, vec![1.0, 1.5, 1.0]);
        let mk = |rev: bool| {
            let mut items = vec![
                EvalItem { id: "a".into(), pred: &p1, gt: &gt1, region: None },
                EvalItem { id: "b".into(), pred: &p2, gt: &gt2, region: None },
            ];
            if rev {
                items.reverse();
            }
            evaluate_set(&mut items, &[3.0, 1.0], false).unwrap()
        };
        let (per, all) = mk(false);
        assert_eq!(mk(true).1, all);
        assert_eq!(per[0].0, "a");
        assert_eq!(all.all.bad_at(3.0), Some(40.0));
        assert_eq!(all.thresholds(), vec![1.0, 3.0]);
        assert!((all.all.avgerr - 8.5 / 5.0).abs() < 1e-12);
    }

    fn arb_epe() -> impl Strategy<Value = EpeMap> {
        proptest::collection::vec((0.0f64..10.0, any::<bool>()), 1..200).prop_map(|v| {
            let (values, valid): (Vec<f64>, Vec<bool>) = v.into_iter().unzip();
            epe(values, valid)
        })
    }

    proptest! {
        #[test]
        fn bad_tau_monotone(e in arb_epe(), a in 0.01f64..10.0, b in 0.01f64..10.0) {
            prop_assume!(e.valid_count() > 0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(bad_tau(&e, hi).unwrap() <= bad_tau(&e, lo).unwrap());
        }

        #[test]
        fn metrics_permutation_invariant(e in arb_epe(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            prop_assume!(e.valid_count() > 0);
            let mut idx: Vec<usize> = (0..e.values.len()).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let s = epe(idx.iter().map(|&i| e.values[i]).collect(), idx.iter().map(|&i| e.valid[i]).collect());
            prop_assert_eq!(bad_tau(&s, 3.0).unwrap(), bad_tau(&e, 3.0).unwrap());
            prop_assert!((avg_err(&s).unwrap() - avg_err(&e).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn region_all_is_weighted_mean(e in arb_epe(), fg_bits in any::<u64>()) {
            prop_assume!(e.valid_count() > 0);
            let fg: Vec<bool> = (0..e.values.len()).map(|i| fg_bits >> (i % 64) & 1 == 1).collect();
            let m = RegionMask::new(e.width, 1, fg.clone());
            let r = region_eval(&e, &m, 3.0).unwrap();
            let nf = (0..fg.len()).filter(|&i| e.valid[i] && fg[i]).count() as f64;
            let nb = e.valid_count() as f64 - nf;
            let mix = (r.background.unwrap_or(0.0) * nb + r.foreground.unwrap_or(0.0) * nf) / (nb + nf);
            prop_assert!((r.all - mix).abs() < 1e-9);
        }
    }
}
