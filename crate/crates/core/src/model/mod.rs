//! Iterative stereo inference: shared feature encoder, context encoder,
//! row-wise correlation pyramid, multi-level convolutional GRU update and
//! convex upsampling back to input resolution.
//!
//! Everything runs on batch size 1 at quarter resolution internally. The
//! architecture hyperparameters live in [`Architecture`] so tests can shrink
//! them without touching code.

mod corr;
mod encoder;
mod infer;
mod update;
mod upsample;
mod weights;

pub use corr::{build_correlation_pyramid, lookup, CorrelationPyramid, CorrelationVolume};
pub use encoder::{extract_context, extract_features, ContextFeatures, FeatureMap};
pub use infer::{image_to_tensor, infer, pad_to_multiple, InferenceSession, PadRecord};
pub use update::{conv_gru_cell, gru_update, mask_logits, GruState};
pub use upsample::{convex_upsample, UPSAMPLE_FACTOR};
pub use weights::{ModelWeights, ParamSpec, WEIGHT_FILE_MAGIC, WEIGHT_FILE_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("parameter `{0}` contains non-finite values")]
    NonFiniteParam(String),
    #[error("bad weight file: {0}")]
    WeightFile(String),
    #[error("left image is {left:?} but right image is {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture descriptor. [`Architecture::standard`] is the full-size
/// configuration; [`Architecture::small`] is a shrunken one for tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Encoder trunk widths at 1/2 and 1/4 resolution.
    pub encoder_dims: [usize; 2],
    /// Feature channels `F` fed to the correlation.
    pub feature_dim: usize,
    /// Hidden channels of every GRU level.
    pub hidden_dim: usize,
    /// Number of GRU levels (1/4, 1/8, 1/16 resolution), 1..=3.
    pub gru_levels: usize,
    pub corr_levels: usize,
    pub corr_radius: usize,
    /// Width of the correlation and disparity branches of the motion encoder.
    pub motion_branch_dim: usize,
    /// Motion feature channels, including the raw disparity channel.
    pub motion_dim: usize,
    /// Hidden width of the disparity and mask heads.
    pub head_dim: usize,
    /// Default number of refinement iterations.
    pub iters: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::standard()
    }
}

impl Architecture {
    pub fn standard() -> Self {
        Self {
            encoder_dims: [64, 128],
            feature_dim: 256,
            hidden_dim: 128,
            gru_levels: 3,
            corr_levels: 4,
            corr_radius: 4,
            motion_branch_dim: 64,
            motion_dim: 128,
            head_dim: 256,
            iters: 32,
        }
    }

    pub fn small() -> Self {
        Self {
            encoder_dims: [8, 16],
            feature_dim: 32,
            hidden_dim: 16,
            gru_levels: 3,
            corr_levels: 4,
            corr_radius: 4,
            motion_branch_dim: 16,
            motion_dim: 16,
            head_dim: 32,
            iters: 8,
        }
    }

    /// Channels produced by a correlation lookup.
    pub fn corr_channels(&self) -> usize {
        self.corr_levels * (2 * self.corr_radius + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Architecture(m.to_string()));
        if !(1..=3).contains(&self.gru_levels) {
            return bad("gru_levels must be 1, 2 or 3");
        }
        if self.corr_levels == 0 {
            return bad("corr_levels must be >= 1");
        }
        if self.motion_dim < 2 {
            return bad("motion_dim must be >= 2");
        }
        let dims = [
            self.encoder_dims[0],
            self.encoder_dims[1],
            self.feature_dim,
            self.hidden_dim,
            self.motion_branch_dim,
            self.head_dim,
        ];
        if dims.contains(&0) {
            return bad("channel counts must be positive");
        }
        Ok(())
    }
}
