//! Sample consistency checks.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scan::{load_gt, load_region, load_rgb};
use super::{DatasetDescriptor, SampleRef, StereoSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// `what` (right image, ground truth, object map) disagrees with the
    /// left image size. Sizes are `[width, height]`.
    DimensionMismatch {
        what: String,
        expected: [usize; 2],
        got: [usize; 2],
    },
    /// A valid disparity at least as large as the image width. `x`, `y` is
    /// the first offending pixel in row-major order.
    DisparityOutOfRange {
        x: usize,
        y: usize,
        value: f32,
        width: usize,
        count: usize,
    },
    NegativeDisparity {
        x: usize,
        y: usize,
        value: f32,
        count: usize,
    },
    /// Ground truth present but no pixel is valid.
    EmptyMask,
    Unreadable {
        path: PathBuf,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dataset: String,
    pub frame_id: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn dims_of(img: &image::RgbImage) -> [usize; 2] {
    [img.width() as usize, img.height() as usize]
}

pub fn validate_sample(sample: &StereoSample) -> Vec<Violation> {
    let mut v = Vec::new();
    let expected = dims_of(&sample.left);
    let right = dims_of(&sample.right);
    if right != expected {
        v.push(Violation::DimensionMismatch {
            what: "right".into(),
            expected,
            got: right,
        });
    }
    let Some(gt) = &sample.gt else { return v };
    let got = [gt.width(), gt.height()];
    if got != expected {
        v.push(Violation::DimensionMismatch {
            what: "ground truth".into(),
            expected,
            got,
        });
    }
    if gt.valid_count() == 0 {
        v.push(Violation::EmptyMask);
        return v;
    }
    let width = expected[0];
    let mut range: Option<Violation> = None;
    let mut negative: Option<Violation> = None;
    for (i, (&d, &ok)) in gt.data().iter().zip(gt.mask()).enumerate() {
        if !ok {
            continue;
        }
        let (x, y) = (i % gt.width(), i / gt.width());
        if d >= width as f32 {
            match &mut range {
                Some(Violation::DisparityOutOfRange { count, .. }) => *count += 1,
                _ => {
                    range = Some(Violation::DisparityOutOfRange {
                        x,
                        y,
                        value: d,
                        width,
                        count: 1,
                    })
                }
            }
        } else if d < 0.0 {
            match &mut negative {
                Some(Violation::NegativeDisparity { count, .. }) => *count += 1,
                _ => negative = Some(Violation::NegativeDisparity { x, y, value: d, count: 1 }),
            }
        }
    }
    v.extend(range);
    v.extend(negative);
    v
}

/// Loads and checks one scanned sample. Read failures become
/// [`Violation::Unreadable`] entries naming the file.
pub fn validate_ref(desc: &DatasetDescriptor, r: &SampleRef) -> ValidationReport {
    let mut violations = Vec::new();
    let mut unreadable = |path: &std::path::Path, e: super::DatasetError| {
        violations.push(Violation::Unreadable {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    };
    let left = load_rgb(&r.left).map_err(|e| unreadable(&r.left, e)).ok();
    let right = load_rgb(&r.right).map_err(|e| unreadable(&r.right, e)).ok();
    let gt = r
        .gt
        .as_deref()
        .and_then(|p| load_gt(desc, p).map_err(|e| unreadable(p, e)).ok());
    let region = r.obj_map.as_deref().and_then(|p| load_region(p).map_err(|e| unreadable(p, e)).ok());
    if let (Some(left), Some(right)) = (left, right) {
        let expected = dims_of(&left);
        let sample = StereoSample::new(left, right, gt);
        violations.extend(validate_sample(&sample));
        if let Some(m) = region {
            let got = [m.width(), m.height()];
            if got != expected {
                violations.push(Violation::DimensionMismatch {
                    what: "object map".into(),
                    expected,
                    got,
                });
            }
        }
    }
    ValidationReport {
        dataset: r.dataset.clone(),
        frame_id: r.frame_id.clone(),
        violations,
    }
}

/// [`validate_ref`] over many samples, in parallel, reports in input order.
pub fn validate_all(desc: &DatasetDescriptor, refs: &[SampleRef]) -> Vec<ValidationReport> {
    refs.par_iter().map(|r| validate_ref(desc, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DisparityMap;
    use image::RgbImage;

    fn sample(w: u32, h: u32, gt: Option<DisparityMap>) -> StereoSample {
        StereoSample::new(RgbImage::new(w, h), RgbImage::new(w, h), gt)
    }

    #[test]
    fn consistent_sample_is_clean() {
        assert!(validate_sample(&sample(4, 3, Some(DisparityMap::filled(4, 3, 1.5)))).is_empty());
        assert!(validate_sample(&sample(4, 3, None)).is_empty());
    }

    #[test]
    fn wide_gt_is_dimension_violation() {
        let v = validate_sample(&sample(4, 3, Some(DisparityMap::filled(5, 3, 1.0))));
        assert!(matches!(&v[0], Violation::DimensionMismatch { got: [5, 3], .. }));
    }

    #[test]
    fn range_violation_names_pixel() {
        let mut gt = DisparityMap::filled(8, 2, 1.0);
        gt.set(3, 1, 13.0, true);
        let v = validate_sample(&sample(8, 2, Some(gt)));
        assert_eq!(
            v,
            vec![Violation::DisparityOutOfRange {
                x: 3,
                y: 1,
                value: 13.0,
                width: 8,
                count: 1
            }]
        );
    }

    #[test]
    fn empty_mask() {
        let gt = DisparityMap::with_mask(2, 2, vec![0.0; 4], vec![false; 4]);
        assert_eq!(validate_sample(&sample(2, 2, Some(gt))), vec![Violation::EmptyMask]);
    }
}
