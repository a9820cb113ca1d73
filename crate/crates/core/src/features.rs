//! Per-crop quality features.
//!
//! Spatial path (luminance only):
//!
//! ```text
//! Y 256x256 -> 8x8 block DCT, zigzag -> 64 ch @ 32x32 -> pool -> 16x16
//!     std of the 63 AC channels; region PCA of the first channels
//! DCT DC 32x32 -> Hop1 Saab 4x4 -> 16 ch @ 8x8 -> pool -> 4x4
//!     std of the 15 AC channels; region PCA of all channels
//! Hop1 DC 8x8  -> Hop2 Saab 4x4 -> 16 ch @ 2x2, flattened
//! ```
//!
//! Spatio-colour path (RGB cuboids):
//!
//! ```text
//! RGB 256x256x3 -> Hop1 Saab 4x4x3 -> 48 ch @ 64x64 -> pool -> 32x32
//!     std of the 47 AC channels; region PCA of the first channels
//! Hop1 DC 64x64 -> Hop2 Saab 4x4 -> 16 ch @ 16x16 -> pool -> 8x8
//!     std of the 15 AC channels; region PCA of all channels
//! ```
//!
//! Region PCA bases are fitted per channel. DC channels are mean-centred; AC
//! channels are not, so a flat crop yields exactly-zero AC features apart
//! from floating-point residue.

use serde::{Deserialize, Serialize};

use crate::container::{ModelReader, ModelWriter, Persist};
use crate::error::{invalid, Error, Result};
use crate::imageio::{CropCandidate, RasterImage};
use crate::transforms::{
    block_dct_zigzag, channel_std, extract_patches, max_pool2, pca_fit, region_pca_reduce, region_vectors,
    saab_apply, saab_fit, Centering, ChannelTensor, PcaBasis, RegionBasis, SaabKernelSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub crop_size: usize,
    pub region: (usize, usize),
    pub pca_keep: usize,
    /// Leading pooled DCT channels (DC first) reduced by region PCA.
    pub dct_pca_channels: usize,
    /// Leading pooled colour Hop1 channels reduced by region PCA.
    pub color_pca_channels: usize,
    /// Output grids of the fused saliency layers.
    pub d4_grid: usize,
    pub d8_grid: usize,
    /// Leading channels of each saliency layer that are fused.
    pub saliency_channels: usize,
    /// Source pixels per cell of the d4 and d8 saliency tensors.
    pub d4_cell: usize,
    pub d8_cell: usize,
    /// Cap on patches per Saab fit.
    pub max_fit_patches: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            crop_size: 256,
            region: (2, 2),
            pca_keep: 2,
            dct_pca_channels: 10,
            color_pca_channels: 4,
            d4_grid: 8,
            d8_grid: 4,
            saliency_channels: 8,
            d4_cell: 16,
            d8_cell: 32,
            max_fit_patches: 30_000,
        }
    }
}

/// Named span of a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crop_size == 0 || self.crop_size % 64 != 0 {
            return Err(invalid("crop size must be a positive multiple of 64"));
        }
        if self.region.0 == 0 || self.region.1 == 0 {
            return Err(invalid("region dimensions must be positive"));
        }
        let rd = self.region.0 * self.region.1;
        if self.pca_keep == 0 || self.pca_keep > rd {
            return Err(invalid(format!("region PCA keeps 1..={rd} components")));
        }
        if self.dct_pca_channels == 0 || self.dct_pca_channels > 64 {
            return Err(invalid("DCT PCA channels must lie in 1..=64"));
        }
        if self.color_pca_channels == 0 || self.color_pca_channels > 48 {
            return Err(invalid("colour PCA channels must lie in 1..=48"));
        }
        if self.d4_grid == 0 || self.d8_grid == 0 || self.d4_cell == 0 || self.d8_cell == 0 {
            return Err(invalid("saliency fusion grids must be positive"));
        }
        Ok(())
    }

    fn region_count(&self, h: usize, w: usize) -> usize {
        h.div_ceil(self.region.0) * w.div_ceil(self.region.1)
    }

    /// Lengths of the spatial and spatio-colour segments.
    pub fn path_lengths(&self) -> (usize, usize) {
        let s = self.crop_size;
        let k = self.pca_keep;
        let dct_pooled = (s / 8).div_ceil(2);
        let hop1 = (s / 8).div_ceil(4);
        let hop1_pooled = hop1.div_ceil(2);
        let hop2 = hop1.div_ceil(4);
        let spatial = 63
            + self.dct_pca_channels * self.region_count(dct_pooled, dct_pooled) * k
            + 15
            + 16 * self.region_count(hop1_pooled, hop1_pooled) * k
            + 16 * hop2 * hop2;
        let c1 = (s / 4).div_ceil(2);
        let c2 = (s / 16).div_ceil(2);
        let color = 47
            + self.color_pca_channels * self.region_count(c1, c1) * k
            + 15
            + 16 * self.region_count(c2, c2) * k;
        (spatial, color)
    }

    pub fn layout(&self) -> Vec<Segment> {
        let (sp, co) = self.path_lengths();
        let d4 = self.saliency_channels * self.d4_grid * self.d4_grid;
        let d8 = self.saliency_channels * self.d8_grid * self.d8_grid;
        let mut offset = 0;
        [("spatial", sp), ("spatiocolor", co), ("saliency_d4", d4), ("saliency_d8", d8)]
            .into_iter()
            .map(|(name, len)| {
                let s = Segment {
                    name: name.to_string(),
                    offset,
                    len,
                };
                offset += len;
                s
            })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.layout().iter().map(|s| s.len).sum()
    }
}

/// Fused per-crop features with their segment table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

impl FeatureVector {
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }
}

/// Every transform fitted on training crops.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureState {
    pub config: FeatureConfig,
    pub dct_pca: Vec<PcaBasis>,
    pub spatial_hop1: SaabKernelSet,
    pub spatial_hop1_pca: Vec<PcaBasis>,
    pub spatial_hop2: SaabKernelSet,
    pub color_hop1: SaabKernelSet,
    pub color_hop1_pca: Vec<PcaBasis>,
    pub color_hop2: SaabKernelSet,
    pub color_hop2_pca: Vec<PcaBasis>,
}

fn centering(channel: usize) -> Centering {
    if channel == 0 {
        Centering::Mean
    } else {
        Centering::None
    }
}

fn dc(t: &ChannelTensor) -> ChannelTensor {
    t.select(0..1).expect("tensor has a DC channel")
}

fn ac_std(t: &ChannelTensor) -> Result<Vec<f64>> {
    Ok(channel_std(&t.select(1..t.channels())?))
}

fn check_crop(sub: &RasterImage, config: &FeatureConfig) -> Result<()> {
    if sub.height() != config.crop_size || sub.width() != config.crop_size {
        return Err(invalid(format!(
            "features need {0}x{0} sub-images, got {1}x{2}",
            config.crop_size,
            sub.height(),
            sub.width()
        )));
    }
    Ok(())
}

fn luma_tensor(sub: &RasterImage) -> ChannelTensor {
    ChannelTensor::from_plane(sub.luma(), sub.height(), sub.width()).expect("luma plane matches image")
}

fn rgb_tensor(sub: &RasterImage) -> ChannelTensor {
    let rgb = sub.to_rgb();
    ChannelTensor::from_interleaved(rgb.samples(), 3, rgb.height(), rgb.width()).expect("RGB samples match image")
}

/// Accumulates up to `cap` patches spread evenly over `sources`.
fn pooled_patches(
    sources: &[ChannelTensor],
    shape: &[usize],
    stride: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    let d: usize = shape.iter().product();
    let per_source = cap.div_ceil(sources.len().max(1)).max(1);
    let mut out = Vec::new();
    for s in sources {
        let (p, _, _) = extract_patches(s, shape, stride)?;
        let n = p.len() / d;
        let step = n.div_ceil(per_source).max(1);
        out.extend(p.chunks_exact(d).step_by(step).flatten());
    }
    Ok(out)
}

fn fit_region_bases(
    maps: &[ChannelTensor],
    channels: usize,
    config: &FeatureConfig,
) -> Result<Vec<PcaBasis>> {
    let d = config.region.0 * config.region.1;
    (0..channels)
        .map(|c| {
            let mut samples = Vec::new();
            for m in maps {
                samples.extend(region_vectors(m, c, config.region));
            }
            Ok(pca_fit(&samples, d, config.pca_keep, centering(c))?.snapped())
        })
        .collect()
}

fn saab(samples: &[f64], shape: &[usize], what: &str) -> Result<SaabKernelSet> {
    saab_fit(samples, shape)
        .map(SaabKernelSet::snapped)
        .map_err(|e| match e {
            Error::InsufficientData(m) => Error::InsufficientData(format!("{what}: {m}")),
            e => e,
        })
}

impl FeatureState {
    /// Fits every transform on a set of training crops.
    pub fn fit(config: &FeatureConfig, crops: &[RasterImage]) -> Result<Self> {
        config.validate()?;
        if crops.is_empty() {
            return Err(Error::InsufficientData("feature fitting needs at least one crop".into()));
        }
        for c in crops {
            check_crop(c, config)?;
        }
        let cap = config.max_fit_patches;

        let dcts = crops
            .iter()
            .map(|c| block_dct_zigzag(&luma_tensor(c)))
            .collect::<Result<Vec<_>>>()?;
        let dct_pooled: Vec<ChannelTensor> = dcts.iter().map(max_pool2).collect();
        let dct_pca = fit_region_bases(&dct_pooled, config.dct_pca_channels, config)?;
        let dct_dc: Vec<ChannelTensor> = dcts.iter().map(dc).collect();
        let spatial_hop1 = saab(&pooled_patches(&dct_dc, &[4, 4], 4, cap)?, &[4, 4], "spatial hop 1")?;
        let hop1 = dct_dc
            .iter()
            .map(|t| saab_apply(&spatial_hop1, t, 4))
            .collect::<Result<Vec<_>>>()?;
        let hop1_pooled: Vec<ChannelTensor> = hop1.iter().map(max_pool2).collect();
        let spatial_hop1_pca = fit_region_bases(&hop1_pooled, 16, config)?;
        let hop1_dc: Vec<ChannelTensor> = hop1.iter().map(dc).collect();
        let spatial_hop2 = saab(&pooled_patches(&hop1_dc, &[4, 4], 1, cap)?, &[4, 4], "spatial hop 2")?;

        let rgbs: Vec<ChannelTensor> = crops.iter().map(rgb_tensor).collect();
        let color_hop1 = saab(&pooled_patches(&rgbs, &[4, 4, 3], 4, cap)?, &[4, 4, 3], "colour hop 1")?;
        let c1 = rgbs
            .iter()
            .map(|t| saab_apply(&color_hop1, t, 4))
            .collect::<Result<Vec<_>>>()?;
        let c1_pooled: Vec<ChannelTensor> = c1.iter().map(max_pool2).collect();
        let color_hop1_pca = fit_region_bases(&c1_pooled, config.color_pca_channels, config)?;
        let c1_dc: Vec<ChannelTensor> = c1.iter().map(dc).collect();
        let color_hop2 = saab(&pooled_patches(&c1_dc, &[4, 4], 4, cap)?, &[4, 4], "colour hop 2")?;
        let c2_pooled = c1_dc
            .iter()
            .map(|t| saab_apply(&color_hop2, t, 4).map(|o| max_pool2(&o)))
            .collect::<Result<Vec<_>>>()?;
        let color_hop2_pca = fit_region_bases(&c2_pooled, 16, config)?;

        Ok(Self {
            config: config.clone(),
            dct_pca,
            spatial_hop1,
            spatial_hop1_pca,
            spatial_hop2,
            color_hop1,
            color_hop1_pca,
            color_hop2,
            color_hop2_pca,
        })
    }
}

/// Spatial features of one sub-image (luminance plane).
pub fn extract_spatial(sub: &RasterImage, state: &FeatureState) -> Result<Vec<f64>> {
    let cfg = &state.config;
    check_crop(sub, cfg)?;
    let dct = block_dct_zigzag(&luma_tensor(sub))?;
    let pooled = max_pool2(&dct);
    let mut out = ac_std(&pooled)?;
    out.extend(region_pca_reduce(
        &pooled.select(0..cfg.dct_pca_channels)?,
        cfg.region,
        RegionBasis::Fitted(&state.dct_pca),
        cfg.pca_keep,
    )?);
    let hop1 = saab_apply(&state.spatial_hop1, &dc(&dct), 4)?;
    let hop1_pooled = max_pool2(&hop1);
    out.extend(ac_std(&hop1_pooled)?);
    out.extend(region_pca_reduce(
        &hop1_pooled,
        cfg.region,
        RegionBasis::Fitted(&state.spatial_hop1_pca),
        cfg.pca_keep,
    )?);
    let hop2 = saab_apply(&state.spatial_hop2, &dc(&hop1), 4)?;
    out.extend_from_slice(hop2.values());
    Ok(out)
}

/// Spatio-colour features of one sub-image (RGB cuboids).
pub fn extract_spatiocolor(sub: &RasterImage, state: &FeatureState) -> Result<Vec<f64>> {
    let cfg = &state.config;
    check_crop(sub, cfg)?;
    let hop1 = saab_apply(&state.color_hop1, &rgb_tensor(sub), 4)?;
    let pooled = max_pool2(&hop1);
    let mut out = ac_std(&pooled)?;
    out.extend(region_pca_reduce(
        &pooled.select(0..cfg.color_pca_channels)?,
        cfg.region,
        RegionBasis::Fitted(&state.color_hop1_pca),
        cfg.pca_keep,
    )?);
    let hop2 = max_pool2(&saab_apply(&state.color_hop2, &dc(&hop1), 4)?);
    out.extend(ac_std(&hop2)?);
    out.extend(region_pca_reduce(
        &hop2,
        cfg.region,
        RegionBasis::Fitted(&state.color_hop2_pca),
        cfg.pca_keep,
    )?);
    Ok(out)
}

fn saliency_window(
    t: &ChannelTensor,
    crop: &CropCandidate,
    cell: usize,
    grid: usize,
    channels: usize,
) -> Result<Vec<f64>> {
    let cell = cell as f64;
    let (y0, x0, len) = (
        crop.row_offset as f64 / cell,
        crop.col_offset as f64 / cell,
        crop.size as f64 / cell,
    );
    if y0 + len > t.height() as f64 + 1e-9 || x0 + len > t.width() as f64 + 1e-9 {
        return Err(invalid(format!(
            "crop {crop:?} lies outside a {}x{} saliency tensor",
            t.height(),
            t.width()
        )));
    }
    if t.channels() < channels {
        return Err(invalid(format!(
            "saliency tensor has {} channels, {channels} are fused",
            t.channels()
        )));
    }
    Ok(t.select(0..channels)?.area_window(y0, x0, len, len, grid, grid).into_values())
}

/// Concatenates the two paths with the saliency-layer regions under the crop.
pub fn fuse_features(
    config: &FeatureConfig,
    spatial: &[f64],
    spatiocolor: &[f64],
    d4: &ChannelTensor,
    d8: &ChannelTensor,
    crop: &CropCandidate,
) -> Result<FeatureVector> {
    let layout = config.layout();
    if spatial.len() != layout[0].len || spatiocolor.len() != layout[1].len {
        return Err(invalid(format!(
            "segment lengths {} and {} do not match the configured layout",
            spatial.len(),
            spatiocolor.len()
        )));
    }
    let mut values = Vec::with_capacity(layout.iter().map(|s| s.len).sum());
    values.extend_from_slice(spatial);
    values.extend_from_slice(spatiocolor);
    values.extend(saliency_window(d4, crop, config.d4_cell, config.d4_grid, config.saliency_channels)?);
    values.extend(saliency_window(d8, crop, config.d8_cell, config.d8_grid, config.saliency_channels)?);
    debug_assert_eq!(values.len(), layout.iter().map(|s| s.len).sum::<usize>());
    Ok(FeatureVector { values, layout })
}

/// Crops `img`, extracts both paths and fuses the saliency layers.
pub fn crop_features(
    state: &FeatureState,
    img: &RasterImage,
    crop: &CropCandidate,
    d4: &ChannelTensor,
    d8: &ChannelTensor,
) -> Result<FeatureVector> {
    let sub = img.crop(crop)?;
    let spatial = extract_spatial(&sub, state)?;
    let color = extract_spatiocolor(&sub, state)?;
    fuse_features(&state.config, &spatial, &color, d4, d8, crop)
}

fn store_bases(w: &mut ModelWriter, prefix: &str, bases: &[PcaBasis]) -> Result<()> {
    w.meta(&format!("{prefix}.count"), &bases.len())?;
    for (i, b) in bases.iter().enumerate() {
        b.store(w, &format!("{prefix}.{i}"))?;
    }
    Ok(())
}

fn load_bases(r: &ModelReader, prefix: &str, expect: usize) -> Result<Vec<PcaBasis>> {
    let n: usize = r.meta(&format!("{prefix}.count"))?;
    if n != expect {
        return Err(Error::Format(format!("{prefix}: expected {expect} PCA bases, found {n}")));
    }
    (0..n).map(|i| PcaBasis::load(r, &format!("{prefix}.{i}"))).collect()
}

impl Persist for FeatureState {
    fn store(&self, w: &mut ModelWriter, prefix: &str) -> Result<()> {
        w.meta(&format!("{prefix}.config"), &self.config)?;
        store_bases(w, &format!("{prefix}.dct_pca"), &self.dct_pca)?;
        self.spatial_hop1.store(w, &format!("{prefix}.spatial_hop1"))?;
        store_bases(w, &format!("{prefix}.spatial_hop1_pca"), &self.spatial_hop1_pca)?;
        self.spatial_hop2.store(w, &format!("{prefix}.spatial_hop2"))?;
        self.color_hop1.store(w, &format!("{prefix}.color_hop1"))?;
        store_bases(w, &format!("{prefix}.color_hop1_pca"), &self.color_hop1_pca)?;
        self.color_hop2.store(w, &format!("{prefix}.color_hop2"))?;
        store_bases(w, &format!("{prefix}.color_hop2_pca"), &self.color_hop2_pca)
    }

    fn load(r: &ModelReader, prefix: &str) -> Result<Self> {
        let config: FeatureConfig = r.meta(&format!("{prefix}.config"))?;
        config.validate()?;
        Ok(Self {
            dct_pca: load_bases(r, &format!("{prefix}.dct_pca"), config.dct_pca_channels)?,
            spatial_hop1: SaabKernelSet::load(r, &format!("{prefix}.spatial_hop1"))?,
            spatial_hop1_pca: load_bases(r, &format!("{prefix}.spatial_hop1_pca"), 16)?,
            spatial_hop2: SaabKernelSet::load(r, &format!("{prefix}.spatial_hop2"))?,
            color_hop1: SaabKernelSet::load(r, &format!("{prefix}.color_hop1"))?,
            color_hop1_pca: load_bases(r, &format!("{prefix}.color_hop1_pca"), config.color_pca_channels)?,
            color_hop2: SaabKernelSet::load(r, &format!("{prefix}.color_hop2"))?,
            color_hop2_pca: load_bases(r, &format!("{prefix}.color_hop2_pca"), 16)?,
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::{rgb_yuv_convert, ColorSpace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_crop(size: usize, seed: u64) -> RasterImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase: f64 = rng.random::<f64>() * 6.0;
        let samples: Vec<f64> = (0..size * size)
            .flat_map(|i| {
                let (y, x) = ((i / size) as f64, (i % size) as f64);
                let base = 120.0 + 50.0 * ((x * 0.3 + phase).sin() + (y * 0.17).cos()) / 2.0;
                [base, (base * 0.7 + 40.0) % 255.0, 255.0 - base]
            })
            .map(|v: f64| (v + rng.random::<f64>() * 30.0).clamp(0.0, 255.0))
            .collect();
        let rgb = RasterImage::new(size, size, ColorSpace::Rgb, samples).unwrap();
        rgb_yuv_convert(&rgb, ColorSpace::Yuv).unwrap()
    }

    fn small_config() -> FeatureConfig {
        FeatureConfig {
            crop_size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn default_layout() {
        let cfg = FeatureConfig::default();
        let (sp, co) = cfg.path_lengths();
        assert_eq!(sp, 63 + 10 * 64 * 2 + 15 + 16 * 4 * 2 + 64);
        assert_eq!(co, 47 + 4 * 256 * 2 + 15 + 16 * 16 * 2);
        let layout = cfg.layout();
        assert_eq!(layout[2].len, 8 * 64);
        assert_eq!(layout[3].len, 8 * 16);
        let total = cfg.dim();
        assert_eq!(layout.last().map(|s| s.offset + s.len), Some(total));
        assert!(((layout[2].len + layout[3].len) as f64) < 0.15 * total as f64);
    }

    #[test]
    fn lengths_match_layout_and_flat_crops_vanish() {
        let cfg = small_config();
        let crops: Vec<RasterImage> = (0..6).map(|s| random_crop(64, s)).collect();
        let state = FeatureState::fit(&cfg, &crops).unwrap();
        let (sp, co) = cfg.path_lengths();
        assert_eq!(extract_spatial(&crops[0], &state).unwrap().len(), sp);
        assert_eq!(extract_spatiocolor(&crops[0], &state).unwrap().len(), co);

        let flat = RasterImage::filled(64, 64, ColorSpace::Yuv, 100.0).unwrap();
        let s = extract_spatial(&flat, &state).unwrap();
        assert!(s[..63].iter().all(|v| *v == 0.0), "DCT AC std");
        let c = extract_spatiocolor(&flat, &state).unwrap();
        assert!(c[..47].iter().all(|v| *v == 0.0), "colour AC std");
        assert!(extract_spatial(&random_crop(32, 1), &state).is_err());
    }

    #[test]
    fn grey_content_has_less_chroma_energy() {
        let cfg = small_config();
        let crops: Vec<RasterImage> = (0..6).map(|s| random_crop(64, s)).collect();
        let state = FeatureState::fit(&cfg, &crops).unwrap();
        let k = &state.color_hop1;
        // projection of a kernel onto patches that are equal across channels
        let grey_norm = |kern: &[f64]| -> f64 {
            kern.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]).powi(2) / 3.0).sum()
        };
        let chroma: Vec<usize> = (1..48).filter(|&i| grey_norm(k.kernel(i)) < 0.5).collect();
        assert!(!chroma.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lum: Vec<f64> = (0..64 * 64).map(|_| 60.0 + rng.random::<f64>() * 120.0).collect();
        let grey: Vec<f64> = lum.iter().flat_map(|&l| [l, l, l]).collect();
        // equal-luminance colourful version: chroma varies, luma unchanged
        let colour: Vec<f64> = lum
            .iter()
            .flat_map(|&l| {
                let u = 128.0 + rng.random::<f64>() * 50.0 - 25.0;
                let v = 128.0 + rng.random::<f64>() * 50.0 - 25.0;
                [l, u, v]
            })
            .collect();
        let grey = RasterImage::new(64, 64, ColorSpace::Rgb, grey).unwrap();
        let colour = rgb_yuv_convert(&RasterImage::new(64, 64, ColorSpace::Yuv, colour).unwrap(), ColorSpace::Rgb).unwrap();
        let energy = |img: &RasterImage| -> f64 {
            let out = saab_apply(k, &rgb_tensor(img), 4).unwrap();
            chroma.iter().map(|&c| out.plane(c).iter().map(|v| v * v).sum::<f64>()).sum()
        };
        assert!(energy(&grey) < energy(&colour));
    }

    #[test]
    fn fusion_windows() {
        let cfg = small_config();
        let d4 = ChannelTensor::from_vec(
            8,
            8,
            8,
            (0..512).map(|i| ((i * 31) % 97) as f64).collect(),
        )
        .unwrap();
        let d8 = d4.resize_area(4, 4);
        let (sp, co) = cfg.path_lengths();
        let (a, b) = (vec![0.0; sp], vec![0.0; co]);
        let c1 = CropCandidate {
            row_offset: 0,
            col_offset: 0,
            size: 64,
        };
        let c2 = CropCandidate {
            row_offset: 64,
            col_offset: 64,
            size: 64,
        };
        let f1 = fuse_features(&cfg, &a, &b, &d4, &d8, &c1).unwrap();
        let again = fuse_features(&cfg, &a, &b, &d4, &d8, &c1).unwrap();
        assert_eq!(f1, again);
        assert_eq!(f1.values.len(), cfg.dim());
        let f2 = fuse_features(&cfg, &a, &b, &d4, &d8, &c2).unwrap();
        assert_ne!(f1.segment("saliency_d4"), f2.segment("saliency_d4"));
        let outside = CropCandidate {
            row_offset: 100,
            col_offset: 0,
            size: 64,
        };
        assert!(fuse_features(&cfg, &a, &b, &d4, &d8, &outside).is_err());
    }
}
