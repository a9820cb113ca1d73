//! Quality head: local sub-image regression with target relaxation, the
//! saliency-guided global regressor and the model container.

mod global;
mod local;
mod pipeline;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use global::{assemble_global_features, global_vector, saliency_histogram};
pub use local::{train_local, LocalParams, LocalRound, QualityLabels};
pub use pipeline::{
    canonical_image, load_canonical, predict_prepared, prepare_image, select_crops, train_pipeline,
    train_pipeline_cached, PrepCache, PreparedImage, TrainedPipeline,
};

use crate::container::{ModelReader, ModelWriter, Persist};
use crate::error::{invalid, Error, Result};
use crate::features::{FeatureConfig, FeatureState};
use crate::gbrt::{gbrt_predict, GbrtParams, TreeEnsemble};
use crate::imageio::RasterImage;
use crate::matrix::Matrix;
use crate::saliency::SaliencyModel;
use crate::selection::RftSelection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityConfig {
    pub crop_size: usize,
    /// Sub-images per image, at training and inference.
    pub k: usize,
    pub crop_stride: usize,
    pub features: FeatureConfig,
    pub rft_bins: usize,
    pub local_keep: usize,
    pub global_keep: usize,
    /// Side of the grid the stacked saliency layers are pooled to before the
    /// global feature test.
    pub global_grid: usize,
    pub hist_bins: usize,
    pub local: LocalParams,
    pub global_gbrt: GbrtParams,
    /// Training crops used to fit the feature transforms.
    pub max_fit_crops: usize,
    pub saliency_crop: bool,
    pub saliency_global: bool,
    pub local_iterative: bool,
    pub seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            crop_size: 256,
            k: 35,
            crop_stride: 32,
            features: FeatureConfig::default(),
            rft_bins: 16,
            local_keep: 3000,
            global_keep: 600,
            global_grid: 4,
            hist_bins: 60,
            local: LocalParams {
                gbrt: GbrtParams {
                    colsample: 0.25,
                    min_samples_leaf: 10.0,
                    ..GbrtParams::default()
                },
                ..LocalParams::default()
            },
            global_gbrt: GbrtParams {
                rounds: 200,
                max_depth: 3,
                shrinkage: 0.05,
                min_samples_leaf: 5.0,
                colsample: 0.5,
                seed: 0,
            },
            max_fit_crops: 96,
            saliency_crop: true,
            saliency_global: true,
            local_iterative: true,
            seed: 0,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.features.crop_size != self.crop_size {
            return Err(invalid("feature crop size must equal the quality crop size"));
        }
        if self.k == 0 || self.crop_stride == 0 {
            return Err(invalid("k and the crop stride must be positive"));
        }
        if self.hist_bins == 0 || self.global_grid == 0 || self.rft_bins < 2 {
            return Err(invalid("histogram, grid and feature-test bins must be positive"));
        }
        if self.local_keep == 0 || (self.saliency_global && self.global_keep == 0) {
            return Err(invalid("kept feature counts must be positive"));
        }
        if self.local.outer_rounds == 0 {
            return Err(invalid("local training needs at least one outer round"));
        }
        Ok(())
    }

    /// Width of the global vector, assuming the d16 block offers at least
    /// `global_keep` candidates.
    pub fn global_dim(&self) -> usize {
        if self.saliency_global {
            self.k + 3 * self.k + self.hist_bins + self.global_keep
        } else {
            self.k
        }
    }

    /// Local parameters with the ablation switch and seed applied.
    pub fn effective_local(&self) -> LocalParams {
        let mut p = self.local.clone();
        if !self.local_iterative {
            p.outer_rounds = 1;
        }
        p.gbrt.seed = self.seed;
        p
    }
}

/// Every fitted stage of the quality predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel {
    pub config: QualityConfig,
    pub saliency: SaliencyModel,
    pub features: FeatureState,
    pub local_rft: RftSelection,
    pub local_ensemble: TreeEnsemble,
    pub global_rft: Option<RftSelection>,
    pub global_ensemble: TreeEnsemble,
    pub score_range: (f64, f64),
    pub outer_rounds_used: usize,
}

const KIND: &str = "quality";

impl QualityModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ModelWriter::new(KIND);
        self.store(&mut w, "")?;
        w.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let r = ModelReader::from_bytes(bytes)?;
        if r.kind() != KIND {
            return Err(Error::Format(format!("expected a quality model, found {}", r.kind())));
        }
        <Self as Persist>::load(&r, "")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn key(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Persist for QualityModel {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        w.meta(&key(prefix, "config"), &self.config)?;
        w.meta(&key(prefix, "score_range"), &self.score_range)?;
        w.meta(&key(prefix, "outer_rounds_used"), &self.outer_rounds_used)?;
        w.meta(&key(prefix, "has_global_rft"), &self.global_rft.is_some())?;
        self.saliency.store(w, &key(prefix, "saliency"))?;
        self.features.store(w, &key(prefix, "features"))?;
        self.local_rft.store(w, &key(prefix, "local_rft"))?;
        self.local_ensemble.store(w, &key(prefix, "local_ensemble"))?;
        if let Some(g) = &self.global_rft {
            g.store(w, &key(prefix, "global_rft"))?;
        }
        self.global_ensemble.store(w, &key(prefix, "global_ensemble"))
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let config: QualityConfig = r.meta(&key(prefix, "config"))?;
        config.validate()?;
        let has_global: bool = r.meta(&key(prefix, "has_global_rft"))?;
        let m = Self {
            saliency: <SaliencyModel as Persist>::load(r, &key(prefix, "saliency"))?,
            features: FeatureState::load(r, &key(prefix, "features"))?,
            local_rft: RftSelection::load(r, &key(prefix, "local_rft"))?,
            local_ensemble: TreeEnsemble::load(r, &key(prefix, "local_ensemble"))?,
            global_rft: if has_global {
                Some(RftSelection::load(r, &key(prefix, "global_rft"))?)
            } else {
                None
            },
            global_ensemble: TreeEnsemble::load(r, &key(prefix, "global_ensemble"))?,
            score_range: r.meta(&key(prefix, "score_range"))?,
            outer_rounds_used: r.meta(&key(prefix, "outer_rounds_used"))?,
            config,
        };
        if m.local_ensemble.n_features != m.local_rft.kept {
            return Err(Error::Format("local selection does not match the local ensemble".into()));
        }
        if m.config.saliency_global != m.global_rft.is_some() {
            return Err(Error::Format("global selection presence disagrees with the config".into()));
        }
        Ok(m)
    }
}

/// Local scores of already selected sub-image features (one row each).
pub fn predict_local(model: &QualityModel, sub_features: &Matrix) -> Result<Vec<f64>> {
    gbrt_predict(&model.local_ensemble, sub_features)
}

/// Quality of one decoded image, clamped to the training score range.
pub fn predict_quality(model: &QualityModel, img: &RasterImage) -> Result<f64> {
    let canon = canonical_image(img, &model.config)?;
    let prep = prepare_image(&model.saliency, &model.config, &canon)?;
    predict_prepared(model, &canon, &prep)
}

/// Decodes and scores an image file.
pub fn predict_path(model: &QualityModel, path: impl AsRef<Path>) -> Result<f64> {
    predict_quality(model, &RasterImage::load(path)?)
}
