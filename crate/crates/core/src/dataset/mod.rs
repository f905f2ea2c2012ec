//! Dataset formats, descriptors and the catalog.
//!
//! The catalog is a JSON document listing [`DatasetDescriptor`]s. Frame
//! counts default to the published sizes of each set and are treated as
//! expectations: a scan replaces them with what is actually on disk, and
//! `validate` reports the difference without failing.

mod depth;
mod pfm;
mod png16;
mod scan;
mod validate;

use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use depth::{
    depth_to_disparity, disparity_to_depth, read_npy_f32, read_png16_depth, write_npy_f32, DepthMap,
};
pub use pfm::{read_pfm, write_pfm};
pub use png16::{
    decode_sintel_disparity, read_kitti_disparity, read_object_map, read_png16_disparity, read_sintel_disparity,
    write_kitti_disparity, write_object_map, write_png16_disparity, INSTEREO2K_SCALE, KITTI_SCALE,
};
pub use scan::{load_rgb, load_sample, scan_dataset, SampleRef};
pub use validate::{validate_all, validate_ref, validate_sample, ValidationReport, Violation};

use crate::disparity::DisparityMap;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad PFM: {0}")]
    Pfm(String),
    #[error("bad PNG: {0}")]
    Png(String),
    #[error("bad NPY: {0}")]
    Npy(String),
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DatasetError>,
    },
    #[error("dataset root {} does not exist", .0.display())]
    MissingRoot(PathBuf),
    #[error("dataset `{0}` has no root path")]
    NoRoot(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("catalog: {0}")]
    Catalog(String),
}

impl DatasetError {
    /// The file the error refers to, if any.
    pub fn path(&self) -> Option<&Path> {
        match self {
            DatasetError::Io { path, .. } | DatasetError::InFile { path, .. } | DatasetError::MissingRoot(path) => {
                Some(path)
            }
            _ => None,
        }
    }

    /// Whether the error comes from the environment (I/O) rather than data
    /// content.
    pub fn is_io(&self) -> bool {
        match self {
            DatasetError::Io { .. } | DatasetError::MissingRoot(_) | DatasetError::NoRoot(_) => true,
            DatasetError::InFile { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, DatasetError>;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ (DatasetError::Io { .. } | DatasetError::InFile { .. }) => e,
        other => DatasetError::InFile {
            path: path.to_path_buf(),
            source: Box::new(other),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataKind {
    Synthetic,
    Realistic,
}

/// Directory layout understood by [`scan_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderKind {
    /// `frames_{clean,final}pass/**/left/*.png`, GT under `disparity/**.pfm`.
    #[serde(rename = "sceneflow")]
    SceneFlow,
    /// `training/{pass}_left/<scene>/*.png`, GT in `training/disparities`.
    Sintel,
    /// `**/*.left.jpg`, GT depth `*.left.depth.png`.
    FallingThings,
    /// `**/image_left/*_left.png`, GT depth `depth_left/*_left_depth.npy`.
    #[serde(rename = "tartanair")]
    TartanAir,
    /// `**/*_left.jpg` / `*_right.jpg` with a per-frame GT map.
    #[serde(rename = "crestereo")]
    CreStereo,
    /// `**/left.png`, `right.png`, `left_disp.png`.
    #[serde(rename = "instereo2k")]
    InStereo2K,
    /// `training/image_2`, `image_3`, `disp_occ_0`, `obj_map`.
    Kitti,
    /// `**/im0.png`, `im1.png`, `disp0GT.pfm` (Middlebury, ETH3D, HR-VS).
    TwoView,
}

/// Ground-truth encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GtFormat {
    Pfm,
    /// 16-bit PNG, `disparity = stored / divisor`, 0 invalid.
    Png16 { divisor: f32 },
    SintelRgb,
    /// `.npy` metric depth converted with the descriptor's camera.
    NpyDepth,
    /// 16-bit PNG metric depth, `z = stored * metres_per_unit`.
    Png16Depth { metres_per_unit: f32 },
}

impl ReaderKind {
    pub fn default_gt_format(self) -> GtFormat {
        match self {
            ReaderKind::SceneFlow | ReaderKind::TwoView | ReaderKind::CreStereo => GtFormat::Pfm,
            ReaderKind::Sintel => GtFormat::SintelRgb,
            ReaderKind::FallingThings => GtFormat::Png16Depth { metres_per_unit: 1e-4 },
            ReaderKind::TartanAir => GtFormat::NpyDepth,
            ReaderKind::InStereo2K => GtFormat::Png16 {
                divisor: INSTEREO2K_SCALE,
            },
            ReaderKind::Kitti => GtFormat::Png16 { divisor: KITTI_SCALE },
        }
    }

    /// Passes enumerated separately by the scanner.
    pub fn passes(self) -> &'static [&'static str] {
        match self {
            ReaderKind::SceneFlow | ReaderKind::Sintel => &["clean", "final"],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: DataKind,
    /// Training frames available for mixing.
    pub count: u64,
    /// Native `(height, width)` when fixed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    pub reader: ReaderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_format: Option<GtFormat>,
    /// Focal length in pixels, for depth-based ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_length: Option<f32>,
    /// Stereo baseline in metres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f32>,
    /// Passes to enumerate; empty means every pass the reader knows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub passes: Vec<String>,
}

impl DatasetDescriptor {
    pub fn new(name: &str, kind: DataKind, count: u64, reader: ReaderKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            count,
            resolution: None,
            root: None,
            reader,
            gt_format: None,
            focal_length: None,
            baseline: None,
            passes: Vec::new(),
        }
    }

    fn with_resolution(mut self, h: usize, w: usize) -> Self {
        self.resolution = Some([h, w]);
        self
    }

    fn with_camera(mut self, fx: f32, baseline: f32) -> Self {
        self.focal_length = Some(fx);
        self.baseline = Some(baseline);
        self
    }

    pub fn gt_format(&self) -> GtFormat {
        self.gt_format.unwrap_or_else(|| self.reader.default_gt_format())
    }

    /// Passes the scanner will enumerate.
    pub fn active_passes(&self) -> Vec<String> {
        let known = self.reader.passes();
        if self.passes.is_empty() {
            known.iter().map(|s| s.to_string()).collect()
        } else {
            self.passes.clone()
        }
    }
}

pub const SCENEFLOW: &str = "Sceneflow";
pub const CRESTEREO: &str = "CreStereo";
pub const TARTANAIR: &str = "TartanAir";
pub const FALLING_THINGS: &str = "FallingThings";
pub const SINTEL: &str = "Sintel";
pub const HRVS: &str = "HR-VS";
pub const INSTEREO2K: &str = "InStereo2K";
pub const KITTI2015: &str = "KITTI-2015";
pub const MIDDLEBURY: &str = "Middlebury";
pub const ETH3D: &str = "ETH3D";

/// The seven pre-training sets with their published training-frame counts.
pub fn pretraining_datasets() -> Vec<DatasetDescriptor> {
    use DataKind::*;
    vec![
        DatasetDescriptor::new(SCENEFLOW, Synthetic, 70908, ReaderKind::SceneFlow).with_resolution(540, 960),
        DatasetDescriptor::new(CRESTEREO, Synthetic, 200000, ReaderKind::CreStereo).with_resolution(1080, 1920),
        DatasetDescriptor::new(TARTANAIR, Synthetic, 306637, ReaderKind::TartanAir)
            .with_resolution(480, 640)
            .with_camera(320.0, 0.25),
        DatasetDescriptor::new(FALLING_THINGS, Synthetic, 61500, ReaderKind::FallingThings)
            .with_resolution(540, 960)
            .with_camera(768.1605, 0.06),
        DatasetDescriptor::new(SINTEL, Synthetic, 2128, ReaderKind::Sintel).with_resolution(436, 1024),
        DatasetDescriptor::new(HRVS, Synthetic, 780, ReaderKind::TwoView).with_resolution(2056, 2464),
        DatasetDescriptor::new(INSTEREO2K, Realistic, 2010, ReaderKind::InStereo2K).with_resolution(860, 1080),
    ]
}

/// The three benchmark training sets used for fine-tuning, with the pair
/// counts 200 / 15 / 153.
pub fn finetuning_datasets() -> Vec<DatasetDescriptor> {
    use DataKind::*;
    vec![
        DatasetDescriptor::new(KITTI2015, Realistic, 200, ReaderKind::Kitti).with_resolution(375, 1242),
        DatasetDescriptor::new(MIDDLEBURY, Realistic, 15, ReaderKind::TwoView),
        DatasetDescriptor::new(ETH3D, Realistic, 153, ReaderKind::TwoView),
    ]
}

pub const CATALOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub format_version: u32,
    pub datasets: Vec<DatasetDescriptor>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::empty()
    }
}

impl Catalog {
    pub fn empty() -> Self {
        Self {
            format_version: CATALOG_FORMAT_VERSION,
            datasets: Vec::new(),
        }
    }

    /// Pre-training and fine-tuning sets with their published counts and no
    /// roots.
    pub fn reference() -> Self {
        let mut datasets = pretraining_datasets();
        datasets.extend(finetuning_datasets());
        Self {
            format_version: CATALOG_FORMAT_VERSION,
            datasets,
        }
    }

    pub fn get(&self, name: &str) -> Option<&DatasetDescriptor> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.datasets.iter().position(|d| d.name == name)
    }

    /// Replaces the entry with the same name or appends a new one.
    pub fn upsert(&mut self, desc: DatasetDescriptor) {
        match self.position(&desc.name) {
            Some(i) => self.datasets[i] = desc,
            None => self.datasets.push(desc),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Catalog = serde_json::from_str(text).map_err(|e| DatasetError::Catalog(e.to_string()))?;
        if c.format_version != CATALOG_FORMAT_VERSION {
            return Err(DatasetError::Catalog(format!(
                "unsupported format_version {}",
                c.format_version
            )));
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| DatasetError::Catalog("not UTF-8".into()))?;
        in_file(path, Self::from_json(&text))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn snapshot_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("catalog serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Known provenance of a sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub pass: Option<String>,
    pub focal_length: Option<f32>,
    pub baseline: Option<f32>,
}

/// A loaded rectified pair with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub left: RgbImage,
    pub right: RgbImage,
    pub gt: Option<DisparityMap>,
    pub dataset: String,
    pub frame_id: String,
    pub meta: SampleMeta,
}

impl StereoSample {
    pub fn new(left: RgbImage, right: RgbImage, gt: Option<DisparityMap>) -> Self {
        Self {
            left,
            right,
            gt,
            dataset: String::new(),
            frame_id: String::new(),
            meta: SampleMeta::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.left.width() as usize
    }

    pub fn height(&self) -> usize {
        self.left.height() as usize
    }
}
