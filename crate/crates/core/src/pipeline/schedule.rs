//! The two-phase training plan. Emitted as configuration only.

use serde::{Deserialize, Serialize};

pub const SCHEDULE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub name: String,
    pub steps: u64,
    pub batch_size: u64,
    /// `[height, width]`.
    pub crop: [usize; 2],
    pub min_lr: f64,
    /// `pretrain` or `finetune`, see [`super::ReplicationPolicy::named`].
    pub policy: String,
}

impl PhaseConfig {
    pub fn samples_consumed(&self) -> u64 {
        self.steps * self.batch_size
    }

    /// Passes over a manifest of `manifest_total` entries.
    pub fn epoch_fraction(&self, manifest_total: u64) -> f64 {
        self.samples_consumed() as f64 / manifest_total as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.steps == 0 || self.batch_size == 0 || self.crop.contains(&0) {
            return Err(format!("phase `{}`: steps, batch size and crop must be positive", self.name));
        }
        if !(self.min_lr > 0.0 && self.min_lr.is_finite()) {
            return Err(format!("phase `{}`: min_lr must be positive", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub format_version: u32,
    pub pretrain: PhaseConfig,
    pub finetune: PhaseConfig,
}

/// Pre-training: 200k steps, batch 4, crop 320×704, minimum LR 1e-4.
/// Fine-tuning: 30k steps, same batch and crop, minimum LR 1e-5.
pub fn make_schedule() -> Schedule {
    Schedule {
        format_version: SCHEDULE_FORMAT_VERSION,
        pretrain: PhaseConfig {
            name: "pretrain".into(),
            steps: 200_000,
            batch_size: 4,
            crop: [320, 704],
            min_lr: 1e-4,
            policy: "pretrain".into(),
        },
        finetune: PhaseConfig {
            name: "finetune".into(),
            steps: 30_000,
            batch_size: 4,
            crop: [320, 704],
            min_lr: 1e-5,
            policy: "finetune".into(),
        },
    }
}

impl Schedule {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialises")
    }
}
