//! Mixed-dataset training manifests, seeded epoch permutation and the
//! two-phase schedule.
//!
//! Replication is materialised: a dataset with factor `k` contributes each of
//! its samples `k` times to the manifest, and an epoch is a permutation of the
//! manifest. Per-epoch proportions are therefore exact.

mod manifest;
mod schedule;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetDescriptor};

pub use manifest::{build_manifest, expected_proportions, ManifestDataset, ManifestEntry, TrainingManifest};
pub use schedule::{make_schedule, PhaseConfig, Schedule, SCHEDULE_FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("policy names dataset `{0}`, which is not in the catalog")]
    UnknownDataset(String),
    #[error("copy factor for `{0}` must be at least 1")]
    ZeroFactor(String),
    #[error("no catalog dataset is covered by the policy")]
    EmptyManifest,
    #[error("`{0}` has too many samples for a manifest")]
    TooLarge(String),
    #[error("unknown policy `{0}` (pretrain, finetune or a JSON file)")]
    UnknownPolicy(String),
    #[error("manifest line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Per-dataset copy factors. Catalog datasets without a factor are left
/// out of the mix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicationPolicy {
    pub factors: BTreeMap<String, u32>,
}

impl ReplicationPolicy {
    pub fn new(factors: BTreeMap<String, u32>) -> Result<Self> {
        if let Some((name, _)) = factors.iter().find(|(_, &f)| f == 0) {
            return Err(PipelineError::ZeroFactor(name.clone()));
        }
        Ok(Self { factors })
    }

    fn from_pairs(pairs: &[(&str, u32)]) -> Self {
        Self {
            factors: pairs.iter().map(|&(n, f)| (n.to_string(), f)).collect(),
        }
    }

    /// Pre-training mix: Sceneflow ×3, CreStereo ×1, TartanAir ×1,
    /// FallingThings ×3, Sintel ×10, HR-VS ×25, InStereo2K ×10.
    pub fn pretrain() -> Self {
        Self::from_pairs(&[
            (dataset::SCENEFLOW, 3),
            (dataset::CRESTEREO, 1),
            (dataset::TARTANAIR, 1),
            (dataset::FALLING_THINGS, 3),
            (dataset::SINTEL, 10),
            (dataset::HRVS, 25),
            (dataset::INSTEREO2K, 10),
        ])
    }

    /// Fine-tuning mix: KITTI-2015 ×1, Middlebury ×1, ETH3D ×10.
    pub fn finetune() -> Self {
        Self::from_pairs(&[(dataset::KITTI2015, 1), (dataset::MIDDLEBURY, 1), (dataset::ETH3D, 10)])
    }

    /// Factor 1 for every named dataset.
    pub fn uniform<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            factors: names.into_iter().map(|n| (n.to_string(), 1)).collect(),
        }
    }

    /// `pretrain`, `finetune`, or `uniform` over the given datasets.
    pub fn named(name: &str, catalog: &[DatasetDescriptor]) -> Result<Self> {
        match name {
            "pretrain" => Ok(Self::pretrain()),
            "finetune" => Ok(Self::finetune()),
            "uniform" => Ok(Self::uniform(catalog.iter().map(|d| d.name.as_str()))),
            other => Err(PipelineError::UnknownPolicy(other.to_string())),
        }
    }

    pub fn factor(&self, name: &str) -> Option<u32> {
        self.factors.get(name).copied()
    }

    pub fn scaled(&self, k: u32) -> Self {
        Self {
            factors: self.factors.iter().map(|(n, &f)| (n.clone(), f * k)).collect(),
        }
    }
}

/// Fisher–Yates permutation of `0..n` driven by `ChaCha8Rng::seed_from_u64`.
///
/// For `i` from `n - 1` down to 1, swap position `i` with a position drawn
/// uniformly from `0..=i` as a `u64`. Identical on every platform.
pub fn permutation(n: usize, seed: u64) -> Vec<u32> {
    assert!(n <= u32::MAX as usize, "permutation too long");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        order.swap(i, j);
    }
    order
}

/// One epoch over a manifest: every entry exactly once, in seeded order.
pub struct EpochStream<'m> {
    manifest: &'m TrainingManifest,
    order: Vec<u32>,
    pos: usize,
}

impl<'m> Iterator for EpochStream<'m> {
    type Item = &'m ManifestEntry;

    fn next(&mut self) -> Option<Self::Item> {
        let i = *self.order.get(self.pos)?;
        self.pos += 1;
        Some(&self.manifest.entries[i as usize])
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.order.len() - self.pos;
        (left, Some(left))
    }
}

impl ExactSizeIterator for EpochStream<'_> {}

impl EpochStream<'_> {
    /// Manifest positions in stream order.
    pub fn order(&self) -> &[u32] {
        &self.order
    }
}

pub fn sample_epoch(manifest: &TrainingManifest, seed: u64) -> EpochStream<'_> {
    EpochStream {
        manifest,
        order: permutation(manifest.entries.len(), seed),
        pos: 0,
    }
}
