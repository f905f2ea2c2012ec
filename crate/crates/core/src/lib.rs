//! Stereo matching toolkit: iterative disparity inference, mixed-dataset
//! training manifests, augmentation, and benchmark evaluation.
//!
//! Module map:
//! - [`tensor`]: dense `f32` kernels (convolution, pooling, sampling).
//! - [`model`]: feature/context encoders, correlation pyramid, multi-level
//!   GRU refinement and convex upsampling.
//! - [`dataset`]: PFM, KITTI PNG, Sintel, `.npy` depth readers and dataset
//!   catalog scanning/validation.
//! - [`pipeline`]: replication policies, training manifests, seeded epoch
//!   permutation and the two-phase schedule.
//! - [`augment`]: crop, scale, photometric and right-view perturbations.
//! - [`eval`]: end-point error, bad-τ, avgerr, foreground/background
//!   analysis and table rendering.
//! - [`colormap`]: disparity visualisation.

pub mod augment;
pub mod colormap;
pub mod dataset;
pub mod disparity;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod tensor;

pub use disparity::DisparityMap;
