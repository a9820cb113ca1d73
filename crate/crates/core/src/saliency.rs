//! Lightweight saliency detector, the Average Saliency Score and
//! saliency-guided crop selection.
//!
//! Three luminance layers (block means at factors 4, 8 and 16) each pass
//! through two Saab hops: overlapped 2x2 patches at stride 1, 2x2 max
//! pooling, then 4x4 patches of the pooled hop-1 DC at stride 2. Each layer
//! keeps its hop-1 DC plus the hop-2 channels. The coarser layers are
//! resampled onto the d4 layer's grid (one location per 16x16 source pixels)
//! and every location is described by its own channels, its 3x3
//! neighbourhood, its deviation from the image mean and its position. A
//! boosted-tree regressor maps that description to saliency.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{ModelReader, ModelWriter, Persist};
use crate::error::{invalid, Error, Result};
use crate::gbrt::{gbrt_fit, GbrtParams, TreeEnsemble};
use crate::imageio::{downsample_plane, CropCandidate, RasterImage};
use crate::matrix::Matrix;
use crate::selection::{rft_rank, RftSelection};
use crate::transforms::{extract_patches, max_pool2, saab_apply, saab_fit, ChannelTensor, SaabKernelSet};

/// Source pixels per prediction-grid cell along each axis.
pub const GRID_FACTOR: usize = 16;
const MIN_SIDE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaliencyConfig {
    /// Downsampling factor of each layer; the first sets the prediction grid.
    pub layers: Vec<usize>,
    /// Hop-2 channels kept per layer (hop-1 DC is always kept).
    pub hop2_channels: usize,
    pub hop2_stride: usize,
    /// Features kept after ranking, capped by the feature dimension.
    pub keep: usize,
    pub rft_bins: usize,
    /// Cap on patches per Saab fit; larger pools are strided down.
    pub max_fit_patches: usize,
    pub gbrt: GbrtParams,
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            layers: vec![4, 8, 16],
            hop2_channels: 16,
            hop2_stride: 2,
            keep: 1000,
            rft_bins: 16,
            max_fit_patches: 40_000,
            gbrt: GbrtParams {
                rounds: 120,
                max_depth: 4,
                shrinkage: 0.1,
                min_samples_leaf: 10.0,
                colsample: 0.25,
                seed: 0,
            },
        }
    }
}

impl SaliencyConfig {
    pub fn layer_channels(&self) -> usize {
        1 + self.hop2_channels
    }

    pub fn base_channels(&self) -> usize {
        self.layers.len() * self.layer_channels()
    }

    /// Per-location feature dimension: own channels, 8 neighbours, deviation
    /// from the image mean, and two coordinates.
    pub fn feature_dim(&self) -> usize {
        self.base_channels() * 10 + 2
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(invalid("saliency layers must be positive factors"));
        }
        if self.hop2_channels > 16 {
            return Err(invalid("at most 16 hop-2 channels exist"));
        }
        if self.hop2_stride == 0 {
            return Err(invalid("hop-2 stride must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel saliency in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || values.len() != height * width {
            return Err(invalid(format!(
                "saliency map {height}x{width} with {} values",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("saliency value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn uniform(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Reads a greyscale map, rescaling 0..255 to 0..1.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = RasterImage::load(path)?;
        let values = img.luma().into_iter().map(|v| (v / 255.0).clamp(0.0, 1.0)).collect();
        Self::new(img.height(), img.width(), values)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let samples = self.values.iter().map(|v| (v * 255.0).round()).collect();
        RasterImage::new(self.height, self.width, crate::ColorSpace::Gray, samples)?.save_png(path)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    fn check(&self, crop: &CropCandidate) -> Result<()> {
        if crop.size == 0
            || crop.row_offset + crop.size > self.height
            || crop.col_offset + crop.size > self.width
        {
            return Err(invalid(format!(
                "crop {crop:?} outside {}x{} map",
                self.height, self.width
            )));
        }
        Ok(())
    }

    fn window(&self, crop: &CropCandidate) -> impl Iterator<Item = f64> + '_ {
        let c = *crop;
        (c.row_offset..c.row_offset + c.size).flat_map(move |y| {
            let row = y * self.width;
            self.values[row + c.col_offset..row + c.col_offset + c.size].iter().copied()
        })
    }

    /// Mean, population standard deviation and maximum inside a crop.
    pub fn crop_stats(&self, crop: &CropCandidate) -> Result<(f64, f64, f64)> {
        self.check(crop)?;
        let n = (crop.size * crop.size) as f64;
        let mean = average_saliency_score(self, crop)?;
        let first = self.get(crop.row_offset, crop.col_offset);
        let mut max = f64::NEG_INFINITY;
        let mut ss = 0.0;
        let mut constant = true;
        for v in self.window(crop) {
            max = max.max(v);
            ss += (v - mean) * (v - mean);
            constant &= v == first;
        }
        let std = if constant { 0.0 } else { (ss / n).sqrt() };
        Ok((mean, std, max))
    }
}

/// Average Saliency Score: the mean map value inside the crop window.
pub fn average_saliency_score(map: &SaliencyMap, crop: &CropCandidate) -> Result<f64> {
    map.check(crop)?;
    let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for v in map.window(crop) {
        sum += v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // rounding in the sum must not push the mean outside the window's range
    Ok((sum / (crop.size * crop.size) as f64).clamp(lo, hi))
}

/// The `k` candidates with the highest ASS, ties in candidate order. With
/// fewer than `k` candidates the ranked list is repeated cyclically.
pub fn select_top_crops(
    map: &SaliencyMap,
    candidates: &[CropCandidate],
    k: usize,
) -> Result<Vec<CropCandidate>> {
    if candidates.is_empty() {
        return Err(invalid("no crop candidates to select from"));
    }
    if k == 0 {
        return Err(invalid("must select at least one crop"));
    }
    let scores = candidates
        .iter()
        .map(|c| average_saliency_score(map, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_by_score(&scores).into_iter().cycle().take(k).map(|i| candidates[i]).collect())
}

/// Indices ordered by descending score, ties by index.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Hop kernels of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerKernels {
    pub hop1: SaabKernelSet,
    pub hop2: SaabKernelSet,
}

#[derive(Debug, Clone, PartialEq)]
struct Fitted {
    layers: Vec<LayerKernels>,
    rft: RftSelection,
    ensemble: TreeEnsemble,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyModel {
    pub config: SaliencyConfig,
    fitted: Option<Fitted>,
}

/// Intermediate tensors of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    /// One tensor per layer (hop-1 DC then hop-2 channels), each at its own
    /// resolution.
    pub layers: Vec<ChannelTensor>,
    /// All layers resampled onto the prediction grid and stacked.
    pub grid: ChannelTensor,
}

impl LayerFeatures {
    pub fn d4(&self) -> &ChannelTensor {
        &self.layers[0]
    }

    pub fn d8(&self) -> &ChannelTensor {
        &self.layers[1.min(self.layers.len() - 1)]
    }
}

impl SaliencyModel {
    pub fn unfitted(config: SaliencyConfig) -> Self {
        Self {
            config,
            fitted: None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    fn fitted(&self) -> Result<&Fitted> {
        self.fitted
            .as_ref()
            .ok_or_else(|| Error::InvalidState("saliency model has not been fitted".into()))
    }

    pub fn layer_kernels(&self) -> Result<&[LayerKernels]> {
        Ok(&self.fitted()?.layers)
    }

    pub fn rft_selection(&self) -> Result<&RftSelection> {
        Ok(&self.fitted()?.rft)
    }

    pub fn ensemble(&self) -> Result<&TreeEnsemble> {
        Ok(&self.fitted()?.ensemble)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = ModelWriter::new("saliency");
        self.store(&mut w, "saliency")?;
        w.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = ModelReader::read(path)?;
        if r.kind() != "saliency" {
            return Err(Error::Format(format!("expected a saliency model, found {}", r.kind())));
        }
        <Self as Persist>::load(&r, "saliency")
    }
}

impl Persist for SaliencyModel {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        let f = self.fitted()?;
        w.meta(&format!("{prefix}.config"), &self.config)?;
        for (i, l) in f.layers.iter().enumerate() {
            l.hop1.store(w, &format!("{prefix}.layer{i}.hop1"))?;
            l.hop2.store(w, &format!("{prefix}.layer{i}.hop2"))?;
        }
        f.rft.store(w, &format!("{prefix}.rft"))?;
        f.ensemble.store(w, &format!("{prefix}.ensemble"))
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let config: SaliencyConfig = r.meta(&format!("{prefix}.config"))?;
        config.validate()?;
        let layers = (0..config.layers.len())
            .map(|i| {
                Ok(LayerKernels {
                    hop1: SaabKernelSet::load(r, &format!("{prefix}.layer{i}.hop1"))?,
                    hop2: SaabKernelSet::load(r, &format!("{prefix}.layer{i}.hop2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rft = RftSelection::load(r, &format!("{prefix}.rft"))?;
        let ensemble = TreeEnsemble::load(r, &format!("{prefix}.ensemble"))?;
        if rft.selected().iter().any(|&i| i >= config.feature_dim()) || ensemble.n_features != rft.kept {
            return Err(Error::Format("saliency selection does not match its ensemble".into()));
        }
        Ok(Self {
            config,
            fitted: Some(Fitted {
                layers,
                rft,
                ensemble,
            }),
        })
    }
}

fn check_size(img: &RasterImage) -> Result<()> {
    if img.height() < MIN_SIDE || img.width() < MIN_SIDE {
        return Err(invalid(format!(
            "saliency needs at least {MIN_SIDE}x{MIN_SIDE} pixels, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

fn layer_input(img: &RasterImage, factor: usize) -> ChannelTensor {
    let (plane, h, w) = downsample_plane(&img.luma(), img.height(), img.width(), factor);
    ChannelTensor::from_vec(1, h, w, plane).expect("plane dimensions are consistent")
}

fn dc(t: &ChannelTensor) -> ChannelTensor {
    t.select(0..1).expect("tensor has a DC channel")
}

/// Every `step`-th patch of a pooled patch buffer, keeping at most `cap`.
fn thin(patches: Vec<f64>, d: usize, cap: usize) -> Vec<f64> {
    let n = patches.len() / d;
    if n <= cap {
        return patches;
    }
    let step = n.div_ceil(cap);
    patches.chunks_exact(d).step_by(step).flatten().copied().collect()
}

fn fit_layer_kernels(images: &[RasterImage], config: &SaliencyConfig) -> Result<Vec<LayerKernels>> {
    let mut out = Vec::with_capacity(config.layers.len());
    for &factor in &config.layers {
        let inputs: Vec<ChannelTensor> = images.iter().map(|im| layer_input(im, factor)).collect();
        let mut pool = Vec::new();
        for t in &inputs {
            pool.extend(extract_patches(t, &[2, 2], 1)?.0);
        }
        let hop1 = saab_fit(&thin(pool, 4, config.max_fit_patches), &[2, 2])?.snapped();

        let mut pool = Vec::new();
        for t in &inputs {
            let pooled = dc(&max_pool2(&saab_apply(&hop1, t, 1)?));
            pool.extend(extract_patches(&pooled, &[4, 4], 1)?.0);
        }
        let hop2 = saab_fit(&thin(pool, 16, config.max_fit_patches), &[4, 4]).map_err(|e| match e {
            Error::InsufficientData(m) => {
                Error::InsufficientData(format!("layer d{factor} hop 2: {m}; supply larger or more images"))
            }
            e => e,
        })?;
        out.push(LayerKernels {
            hop1,
            hop2: hop2.snapped(),
        });
    }
    Ok(out)
}

fn layer_tensors(
    kernels: &[LayerKernels],
    config: &SaliencyConfig,
    img: &RasterImage,
) -> Result<LayerFeatures> {
    check_size(img)?;
    let mut layers = Vec::with_capacity(kernels.len());
    for (k, &factor) in kernels.iter().zip(&config.layers) {
        let hop1 = max_pool2(&saab_apply(&k.hop1, &layer_input(img, factor), 1)?);
        let hop1_dc = dc(&hop1);
        let hop2 = saab_apply(&k.hop2, &hop1_dc, config.hop2_stride)?;
        let dc_small = hop1_dc.resize_area(hop2.height(), hop2.width());
        layers.push(ChannelTensor::concat(&[dc_small, hop2.select(0..config.hop2_channels)?])?);
    }
    let (gh, gw) = (layers[0].height(), layers[0].width());
    let resampled: Vec<ChannelTensor> = layers
        .iter()
        .map(|t| {
            if (t.height(), t.width()) == (gh, gw) {
                t.clone()
            } else {
                t.resize_bilinear(gh, gw)
            }
        })
        .collect();
    let grid = ChannelTensor::concat(&resampled)?;
    Ok(LayerFeatures { layers, grid })
}

/// Multi-layer tensors of one image under a fitted model.
pub fn build_layer_features(model: &SaliencyModel, img: &RasterImage) -> Result<LayerFeatures> {
    layer_tensors(&model.fitted()?.layers, &model.config, img)
}

/// Per-location feature matrix (one row per grid cell, row-major).
pub fn location_features(grid: &ChannelTensor) -> Matrix {
    let (c, h, w) = (grid.channels(), grid.height(), grid.width());
    let means: Vec<f64> = (0..c)
        .map(|ch| grid.plane(ch).iter().sum::<f64>() / (h * w) as f64)
        .collect();
    let dim = c * 10 + 2;
    let mut data = Vec::with_capacity(h * w * dim);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data.push(grid.get(ch, y, x) as f32);
            }
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let ny = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    let nx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    for ch in 0..c {
                        data.push(grid.get(ch, ny, nx) as f32);
                    }
                }
            }
            for (ch, m) in means.iter().enumerate() {
                data.push((grid.get(ch, y, x) - m) as f32);
            }
            data.push(((y as f64 + 0.5) / h as f64) as f32);
            data.push(((x as f64 + 0.5) / w as f64) as f32);
        }
    }
    Matrix::from_vec(h * w, dim, data).expect("feature buffer matches its shape")
}

fn grid_target(map: &SaliencyMap) -> Vec<f64> {
    downsample_plane(&map.values, map.height, map.width, GRID_FACTOR).0
}

/// Fits layer kernels, the feature ranking and the regressor.
pub fn saliency_train(
    images: &[RasterImage],
    gt_maps: &[SaliencyMap],
    config: &SaliencyConfig,
) -> Result<SaliencyModel> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::InsufficientData("saliency training needs at least one image".into()));
    }
    if images.len() != gt_maps.len() {
        return Err(invalid(format!(
            "{} images but {} saliency maps",
            images.len(),
            gt_maps.len()
        )));
    }
    for (i, (im, m)) in images.iter().zip(gt_maps).enumerate() {
        check_size(im)?;
        if (im.height(), im.width()) != (m.height, m.width) {
            return Err(invalid(format!("saliency map {i} does not match its image size")));
        }
    }
    let layers = fit_layer_kernels(images, config)?;

    let dim = config.feature_dim();
    let mut x = Matrix::zeros(0, dim);
    let mut y = Vec::new();
    for (im, m) in images.iter().zip(gt_maps) {
        let lf = layer_tensors(&layers, config, im)?;
        let f = location_features(&lf.grid);
        let t = grid_target(m);
        debug_assert_eq!(t.len(), f.rows());
        for r in 0..f.rows() {
            x.push_row(f.row(r))?;
        }
        y.extend(t);
    }
    if x.rows() < 4 {
        return Err(Error::InsufficientData("too few saliency grid locations".into()));
    }
    let rft = rft_rank(&x, &y, config.rft_bins)?.truncated(config.keep.min(dim))?;
    let xs = x.select_columns(rft.selected())?;
    let ensemble = gbrt_fit(&xs, &y, &config.gbrt)?;
    Ok(SaliencyModel {
        config: config.clone(),
        fitted: Some(Fitted {
            layers,
            rft,
            ensemble,
        }),
    })
}

/// Predicted saliency on the grid, clamped to `[0, 1]`.
pub fn predict_grid(model: &SaliencyModel, lf: &LayerFeatures) -> Result<Vec<f64>> {
    let f = model.fitted()?;
    let x = location_features(&lf.grid).select_columns(f.rft.selected())?;
    Ok((0..x.rows())
        .map(|r| f.ensemble.predict_staged(x.row(r), f.ensemble.rounds()).clamp(0.0, 1.0))
        .collect())
}

/// Upsamples a grid prediction to the source dimensions.
pub fn upsample_grid(grid: &[f64], gh: usize, gw: usize, height: usize, width: usize) -> Result<SaliencyMap> {
    let (fh, fw) = (gh * GRID_FACTOR, gw * GRID_FACTOR);
    let full = crate::imageio::bilinear_plane(grid, gh, gw, fh, fw);
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        values.extend(full[y * fw..y * fw + width].iter().map(|v| v.clamp(0.0, 1.0)));
    }
    SaliencyMap::new(height, width, values)
}

/// Full-resolution saliency map of an image.
pub fn saliency_predict(model: &SaliencyModel, img: &RasterImage) -> Result<SaliencyMap> {
    let lf = build_layer_features(model, img)?;
    saliency_predict_from(model, &lf, img.height(), img.width())
}

/// As [`saliency_predict`], reusing already built layer features.
pub fn saliency_predict_from(
    model: &SaliencyModel,
    lf: &LayerFeatures,
    height: usize,
    width: usize,
) -> Result<SaliencyMap> {
    let grid = predict_grid(model, lf)?;
    upsample_grid(&grid, lf.grid.height(), lf.grid.width(), height, width)
}

/// Reads a saliency training manifest (`image_path,map_path`). Relative
/// paths resolve against the manifest's directory.
pub fn read_saliency_manifest(path: impl AsRef<Path>) -> Result<Vec<(std::path::PathBuf, std::path::PathBuf)>> {
    #[derive(Deserialize)]
    struct Row {
        image_path: String,
        map_path: String,
    }
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        out.push((base.join(&row.image_path), base.join(&row.map_path)));
    }
    if out.is_empty() {
        return Err(Error::InsufficientData(format!("{} lists no images", path.display())));
    }
    Ok(out)
}

/// Loads every pair listed in a saliency manifest.
pub fn load_saliency_corpus(path: impl AsRef<Path>) -> Result<(Vec<RasterImage>, Vec<SaliencyMap>)> {
    let mut images = Vec::new();
    let mut maps = Vec::new();
    for (img, map) in read_saliency_manifest(path)? {
        images.push(RasterImage::load(&img)?);
        maps.push(SaliencyMap::load(&map)?);
    }
    Ok((images, maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ColorSpace;

    fn map_from(values: Vec<f64>, h: usize, w: usize) -> SaliencyMap {
        SaliencyMap::new(h, w, values).unwrap()
    }

    fn crop(r: usize, c: usize, s: usize) -> CropCandidate {
        CropCandidate {
            row_offset: r,
            col_offset: c,
            size: s,
        }
    }

    fn textured(h: usize, w: usize, seed: usize) -> RasterImage {
        let samples = (0..h * w)
            .flat_map(|i| {
                let (y, x) = (i / w, i % w);
                let v = 128.0 + 60.0 * ((x as f64 * 0.21 + seed as f64).sin() * (y as f64 * 0.13).cos());
                let blob = if (y as f64 - h as f64 / 2.0).powi(2) + (x as f64 - w as f64 / 3.0).powi(2) < 900.0 {
                    50.0
                } else {
                    0.0
                };
                let l = (v + blob).clamp(0.0, 255.0);
                [l, 128.0, 128.0]
            })
            .collect();
        RasterImage::new(h, w, ColorSpace::Yuv, samples).unwrap()
    }

    #[test]
    fn ass_examples() {
        let m = SaliencyMap::uniform(8, 8, 0.3).unwrap();
        assert_eq!(average_saliency_score(&m, &crop(2, 1, 4)).unwrap(), 0.3);
        let half: Vec<f64> = (0..16).map(|i| if i % 4 < 2 { 0.0 } else { 1.0 }).collect();
        assert_eq!(average_saliency_score(&map_from(half, 4, 4), &crop(0, 0, 4)).unwrap(), 0.5);
        let vals: Vec<f64> = (0..16).map(|i| ((i * 37) % 17) as f64 / 17.0).collect();
        let oracle = vals.iter().sum::<f64>() / 16.0;
        let got = average_saliency_score(&map_from(vals, 4, 4), &crop(0, 0, 4)).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!(average_saliency_score(&m, &crop(5, 5, 4)).is_err());
    }

    #[test]
    fn selection_examples() {
        // three 2x2 crops of a 2x6 map with means 0.1, 0.9, 0.5
        let vals = vec![0.1, 0.1, 0.9, 0.9, 0.5, 0.5, 0.1, 0.1, 0.9, 0.9, 0.5, 0.5];
        let m = map_from(vals, 2, 6);
        let cands = vec![crop(0, 0, 2), crop(0, 2, 2), crop(0, 4, 2)];
        assert_eq!(select_top_crops(&m, &cands, 2).unwrap(), vec![cands[1], cands[2]]);
        let flat = SaliencyMap::uniform(2, 6, 0.4).unwrap();
        assert_eq!(select_top_crops(&flat, &cands, 3).unwrap(), cands);
        let many = select_top_crops(&m, &cands, 7).unwrap();
        assert_eq!(many.len(), 7);
        assert_eq!(many[3], many[0]);
        assert_eq!(many[6], many[0]);
        assert!(select_top_crops(&m, &[], 1).is_err());
    }

    #[test]
    fn crop_stats_of_uniform_map() {
        let m = SaliencyMap::uniform(10, 10, 0.7).unwrap();
        assert_eq!(m.crop_stats(&crop(1, 1, 5)).unwrap(), (0.7, 0.0, 0.7));
    }

    #[test]
    fn map_rejects_out_of_range() {
        assert!(SaliencyMap::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(SaliencyMap::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn grid_and_dimensions() {
        let imgs: Vec<RasterImage> = (0..2).map(|s| textured(256, 256, s)).collect();
        let maps: Vec<SaliencyMap> = (0..2).map(|_| SaliencyMap::uniform(256, 256, 0.5).unwrap()).collect();
        let cfg = SaliencyConfig {
            gbrt: GbrtParams {
                rounds: 20,
                ..SaliencyConfig::default().gbrt
            },
            ..Default::default()
        };
        let model = saliency_train(&imgs, &maps, &cfg).unwrap();
        let lf = build_layer_features(&model, &imgs[0]).unwrap();
        assert_eq!((lf.grid.height(), lf.grid.width()), (16, 16));
        assert_eq!(lf.grid.channels(), 51);
        assert_eq!(location_features(&lf.grid).cols(), cfg.feature_dim());
        let p = saliency_predict(&model, &imgs[1]).unwrap();
        assert_eq!((p.height(), p.width()), (256, 256));
        assert!(p.values().iter().all(|v| (v - 0.5).abs() < 0.05));
        let again = saliency_predict(&model, &imgs[1]).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn constant_image_gives_identical_locations() {
        let imgs = vec![textured(128, 128, 0)];
        let maps = vec![SaliencyMap::uniform(128, 128, 0.2).unwrap()];
        let cfg = SaliencyConfig {
            gbrt: GbrtParams {
                rounds: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let model = saliency_train(&imgs, &maps, &cfg).unwrap();
        let flat = RasterImage::filled(128, 128, ColorSpace::Yuv, 90.0).unwrap();
        let lf = build_layer_features(&model, &flat).unwrap();
        for c in 0..lf.grid.channels() {
            let p = lf.grid.plane(c);
            assert!(p.iter().all(|v| *v == p[0]));
        }
    }

    #[test]
    fn small_and_unfitted() {
        let model = SaliencyModel::unfitted(SaliencyConfig::default());
        let img = textured(128, 128, 1);
        assert!(matches!(saliency_predict(&model, &img), Err(Error::InvalidState(_))));
        let tiny = RasterImage::filled(32, 80, ColorSpace::Yuv, 10.0).unwrap();
        let maps = vec![SaliencyMap::uniform(32, 80, 0.0).unwrap()];
        assert!(matches!(
            saliency_train(&[tiny], &maps, &SaliencyConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            saliency_train(&[], &[], &SaliencyConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
