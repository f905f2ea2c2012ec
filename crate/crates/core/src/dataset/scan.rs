//! Directory scanning and sample loading.

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{
    depth_to_disparity, in_file, read_file, read_npy_f32, read_object_map, read_pfm, read_png16_depth,
    read_png16_disparity, read_sintel_disparity, DatasetDescriptor, DatasetError, GtFormat, ReaderKind, Result,
    SampleMeta, StereoSample,
};
use crate::disparity::DisparityMap;
use crate::eval::RegionMask;

/// Location of one sample on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub dataset: String,
    pub index: u64,
    /// Path of the left image relative to the root, without extension.
    pub frame_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<String>,
    pub left: PathBuf,
    pub right: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj_map: Option<PathBuf>,
}

fn files_under(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(true).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            DatasetError::Io {
                path,
                source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("filesystem loop")),
            }
        })?;
        if entry.file_type().is_file() {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

fn name_of(p: &Path) -> &str {
    p.file_name().and_then(|s| s.to_str()).unwrap_or("")
}

fn parent_name(p: &Path) -> &str {
    p.parent().map(name_of).unwrap_or("")
}

/// Replaces the first path component equal to `from`, starting the search
/// at `skip` components (so the root never matches).
fn swap_component(p: &Path, skip: usize, from: &str, to: &str) -> Option<PathBuf> {
    let mut done = false;
    let mut out = PathBuf::new();
    for (i, c) in p.components().enumerate() {
        if !done && i >= skip && c.as_os_str() == from {
            out.push(to);
            done = true;
        } else {
            out.push(c);
        }
    }
    done.then_some(out)
}

fn sibling(p: &Path, name: &str) -> PathBuf {
    p.with_file_name(name)
}

fn swap_suffix(p: &Path, from: &str, to: &str) -> Option<PathBuf> {
    let n = name_of(p);
    n.strip_suffix(from).map(|stem| sibling(p, &format!("{stem}{to}")))
}

fn existing(p: PathBuf) -> Option<PathBuf> {
    p.is_file().then_some(p)
}

struct Candidate {
    left: PathBuf,
    right: PathBuf,
    gt: Option<PathBuf>,
    obj_map: Option<PathBuf>,
    pass: Option<String>,
}

fn candidates(desc: &DatasetDescriptor, root: &Path, files: &[PathBuf]) -> Vec<Candidate> {
    let skip = root.components().count();
    let mut out = Vec::new();
    let simple = |left: &Path, right: Option<PathBuf>, gt: Option<PathBuf>| {
        right.map(|right| Candidate {
            left: left.to_path_buf(),
            right,
            gt: gt.and_then(existing),
            obj_map: None,
            pass: None,
        })
    };
    match desc.reader {
        ReaderKind::SceneFlow => {
            for pass in desc.active_passes() {
                let dir = format!("frames_{pass}pass");
                for f in files {
                    if parent_name(f) != "left" || !f.components().skip(skip).any(|c| c.as_os_str() == dir.as_str()) {
                        continue;
                    }
                    let Some(right) = swap_component(f, skip, "left", "right") else { continue };
                    let gt = swap_component(f, skip, &dir, "disparity").map(|g| g.with_extension("pfm"));
                    out.push(Candidate {
                        left: f.clone(),
                        right,
                        gt: gt.and_then(existing),
                        obj_map: None,
                        pass: Some(pass.clone()),
                    });
                }
            }
        }
        ReaderKind::Sintel => {
            for pass in desc.active_passes() {
                let dir = format!("{pass}_left");
                for f in files {
                    let in_pass = f.components().skip(skip).any(|c| c.as_os_str() == dir.as_str());
                    if !in_pass || f.extension().is_none_or(|e| e != "png") {
                        continue;
                    }
                    let right = swap_component(f, skip, &dir, &format!("{pass}_right"));
                    let gt = swap_component(f, skip, &dir, "disparities");
                    if let Some(mut c) = simple(f, right, gt) {
                        c.pass = Some(pass.clone());
                        out.push(c);
                    }
                }
            }
        }
        ReaderKind::FallingThings => {
            for f in files {
                if let Some(right) = swap_suffix(f, ".left.jpg", ".right.jpg") {
                    out.extend(simple(f, Some(right), swap_suffix(f, ".left.jpg", ".left.depth.png")));
                }
            }
        }
        ReaderKind::TartanAir => {
            for f in files {
                if parent_name(f) != "image_left" || !name_of(f).ends_with("_left.png") {
                    continue;
                }
                let right = swap_component(f, skip, "image_left", "image_right")
                    .and_then(|r| swap_suffix(&r, "_left.png", "_right.png"));
                let gt = swap_component(f, skip, "image_left", "depth_left")
                    .and_then(|g| swap_suffix(&g, "_left.png", "_left_depth.npy"));
                out.extend(simple(f, right, gt));
            }
        }
        ReaderKind::CreStereo => {
            let gt_ext = match desc.gt_format() {
                GtFormat::Pfm => ".pfm",
                _ => ".png",
            };
            for f in files {
                if let Some(right) = swap_suffix(f, "_left.jpg", "_right.jpg") {
                    let gt = swap_suffix(f, "_left.jpg", &format!("_left.disp{gt_ext}"));
                    out.extend(simple(f, Some(right), gt));
                }
            }
        }
        ReaderKind::InStereo2K => {
            for f in files {
                if name_of(f) == "left.png" {
                    out.extend(simple(f, Some(sibling(f, "right.png")), Some(sibling(f, "left_disp.png"))));
                }
            }
        }
        ReaderKind::Kitti => {
            for f in files {
                if parent_name(f) != "image_2" || !name_of(f).ends_with("_10.png") {
                    continue;
                }
                let right = swap_component(f, skip, "image_2", "image_3");
                let gt = swap_component(f, skip, "image_2", "disp_occ_0");
                if let Some(mut c) = simple(f, right, gt) {
                    c.obj_map = swap_component(f, skip, "image_2", "obj_map").and_then(existing);
                    out.push(c);
                }
            }
        }
        ReaderKind::TwoView => {
            for f in files {
                if name_of(f) == "im0.png" {
                    let gt = existing(sibling(f, "disp0GT.pfm")).or_else(|| existing(sibling(f, "disp0.pfm")));
                    out.extend(simple(f, Some(sibling(f, "im1.png")), gt));
                }
            }
        }
    }
    out
}

/// Enumerates the samples under the descriptor's root in a deterministic
/// order: pass, then lexicographic path. Passes are distinct samples.
///
/// A left image whose right counterpart is missing is an error naming the
/// missing file.
pub fn scan_dataset(desc: &DatasetDescriptor) -> Result<Vec<SampleRef>> {
    let root = desc.root.as_deref().ok_or_else(|| DatasetError::NoRoot(desc.name.clone()))?;
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let files = files_under(root)?;
    let mut refs = Vec::new();
    for (i, c) in candidates(desc, root, &files).into_iter().enumerate() {
        if !c.right.is_file() {
            return Err(DatasetError::Io {
                path: c.right,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "right image missing"),
            });
        }
        let rel = c.left.strip_prefix(root).unwrap_or(&c.left).with_extension("");
        refs.push(SampleRef {
            dataset: desc.name.clone(),
            index: i as u64,
            frame_id: rel.to_string_lossy().replace('\\', "/"),
            pass: c.pass,
            left: c.left,
            right: c.right,
            gt: c.gt,
            obj_map: c.obj_map,
        });
    }
    Ok(refs)
}

/// Decodes any supported image file to 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let bytes = read_file(path)?;
    let img = image::load_from_memory(&bytes).map_err(|e| DatasetError::InFile {
        path: path.to_path_buf(),
        source: Box::new(DatasetError::Png(e.to_string())),
    })?;
    Ok(img.into_rgb8())
}

fn camera(desc: &DatasetDescriptor) -> Result<(f32, f32)> {
    match (desc.focal_length, desc.baseline) {
        (Some(f), Some(b)) => Ok((f, b)),
        _ => Err(DatasetError::InvalidArgument(format!(
            "{} stores depth; the descriptor needs focal_length and baseline",
            desc.name
        ))),
    }
}

/// Reads a ground-truth file in the given format.
pub(crate) fn load_gt(desc: &DatasetDescriptor, path: &Path) -> Result<DisparityMap> {
    let bytes = read_file(path)?;
    let map = match desc.gt_format() {
        GtFormat::Pfm => read_pfm(&bytes),
        GtFormat::Png16 { divisor } => read_png16_disparity(&bytes, divisor),
        GtFormat::SintelRgb => read_sintel_disparity(&bytes),
        GtFormat::NpyDepth => {
            let (fx, b) = camera(desc)?;
            read_npy_f32(&bytes).and_then(|d| depth_to_disparity(&d, fx, b))
        }
        GtFormat::Png16Depth { metres_per_unit } => {
            let (fx, b) = camera(desc)?;
            read_png16_depth(&bytes, metres_per_unit).and_then(|d| depth_to_disparity(&d, fx, b))
        }
    };
    in_file(path, map)
}

pub(crate) fn load_region(path: &Path) -> Result<RegionMask> {
    let bytes = read_file(path)?;
    in_file(path, read_object_map(&bytes))
}

pub fn load_sample(desc: &DatasetDescriptor, r: &SampleRef) -> Result<StereoSample> {
    let left = load_rgb(&r.left)?;
    let right = load_rgb(&r.right)?;
    let gt = r.gt.as_deref().map(|p| load_gt(desc, p)).transpose()?;
    Ok(StereoSample {
        left,
        right,
        gt,
        dataset: desc.name.clone(),
        frame_id: r.frame_id.clone(),
        meta: SampleMeta {
            pass: r.pass.clone(),
            focal_length: desc.focal_length,
            baseline: desc.baseline,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{write_pfm, DataKind};

    fn touch(p: &Path, bytes: &[u8]) {
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, bytes).unwrap();
    }

    fn desc(root: &Path, reader: ReaderKind) -> DatasetDescriptor {
        let mut d = DatasetDescriptor::new("t", DataKind::Synthetic, 1, reader);
        d.root = Some(root.to_path_buf());
        d
    }

    #[test]
    fn empty_and_missing_root() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_dataset(&desc(dir.path(), ReaderKind::SceneFlow)).unwrap().is_empty());
        let gone = desc(&dir.path().join("nope"), ReaderKind::SceneFlow);
        assert!(matches!(scan_dataset(&gone), Err(DatasetError::MissingRoot(_))));
    }

    #[test]
    fn sceneflow_passes_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let pfm = write_pfm(&DisparityMap::filled(2, 2, 1.0));
        for pass in ["clean", "final"] {
            for i in 0..3 {
                for side in ["left", "right"] {
                    touch(&dir.path().join(format!("frames_{pass}pass/TRAIN/A/0000/{side}/{i:04}.png")), b"x");
                }
            }
        }
        for i in 0..3 {
            touch(&dir.path().join(format!("disparity/TRAIN/A/0000/left/{i:04}.pfm")), &pfm);
        }
        let mut d = desc(dir.path(), ReaderKind::SceneFlow);
        let refs = scan_dataset(&d).unwrap();
        assert_eq!(refs.len(), 6);
        assert_eq!(refs[0].pass.as_deref(), Some("clean"));
        assert_eq!(refs[5].pass.as_deref(), Some("final"));
        assert!(refs.iter().all(|r| r.gt.is_some()));
        assert_eq!(refs[0].frame_id, "frames_cleanpass/TRAIN/A/0000/left/0000");
        assert_eq!(refs, scan_dataset(&d).unwrap());
        d.passes = vec!["final".into()];
        assert_eq!(scan_dataset(&d).unwrap().len(), 3);
    }

    #[test]
    fn missing_right_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        touch(&dir.path().join("a/im0.png"), b"x");
        let err = scan_dataset(&desc(dir.path(), ReaderKind::TwoView)).unwrap_err();
        assert!(err.path().unwrap().ends_with("a/im1.png"));
    }

    #[test]
    fn kitti_layout() {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["image_2", "image_3", "disp_occ_0", "obj_map"] {
            touch(&dir.path().join(format!("training/{sub}/000000_10.png")), b"x");
        }
        touch(&dir.path().join("training/image_2/000000_11.png"), b"x");
        let refs = scan_dataset(&desc(dir.path(), ReaderKind::Kitti)).unwrap();
        assert_eq!(refs.len(), 1);
        assert!(refs[0].obj_map.is_some() && refs[0].gt.is_some());
    }
}
