//! Saliency-guided blind image quality assessment built from green-learning
//! components: block DCT, Saab transforms and PCA for features, a relevant
//! feature test for selection, and gradient-boosted regression trees for
//! every regressor in the pipeline.
//!
//! The crate is organised bottom-up:
//!
//! * [`imageio`] decodes images, converts colour spaces and enumerates crops.
//! * [`transforms`] holds the numerical primitives (DCT, PCA, Saab, pooling).
//! * [`saliency`] is the lightweight saliency detector and crop selection.
//! * [`features`] builds the per-crop quality feature vector.
//! * [`selection`] ranks features by their best single-split regression loss.
//! * [`gbrt`] is the boosted-tree regressor.
//! * [`quality`] trains and runs the local and global quality predictors.
//! * [`eval`] provides metrics, manifests, the experiment protocol and a
//!   synthetic dataset generator.

pub mod container;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbrt;
pub mod imageio;
pub mod matrix;
pub mod quality;
pub mod saliency;
pub mod selection;
pub mod transforms;

pub use error::{Error, Result};
pub use eval::metrics::{plcc, srocc};
pub use features::{FeatureConfig, FeatureState, FeatureVector};
pub use gbrt::{GbrtParams, TreeEnsemble};
pub use imageio::{ColorSpace, CropCandidate, RasterImage};
pub use matrix::Matrix;
pub use quality::{QualityConfig, QualityModel};
pub use saliency::{SaliencyConfig, SaliencyMap, SaliencyModel};
pub use selection::RftSelection;
pub use transforms::{ChannelTensor, PcaBasis, SaabKernelSet};

/// Rounds a value to the nearest `f32`. Every learned parameter goes through
/// this before use so that the single-precision model file reproduces the
/// in-memory model exactly.
#[inline]
pub(crate) fn snap(x: f64) -> f64 {
    x as f32 as f64
}
