//! Training order and per-image preparation.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::global::{global_vector, saliency_histogram};
use super::local::{train_local, QualityLabels};
use super::{QualityConfig, QualityModel};
use crate::error::{invalid, Error, Result};
use crate::eval::manifest::DatasetManifest;
use crate::features::{crop_features, FeatureState};
use crate::gbrt::{gbrt_fit, gbrt_predict};
use crate::imageio::{crop_candidates, rgb_yuv_convert, ColorSpace, CropCandidate, RasterImage};
use crate::matrix::Matrix;
use crate::saliency::{build_layer_features, rank_by_score, saliency_predict_from, SaliencyModel};
use crate::selection::{rft_apply, rft_apply_row, rft_rank, rft_rank_weighted};
use crate::transforms::ChannelTensor;

/// Everything about an image that does not depend on the quality stages:
/// saliency statistics of every crop candidate and the saliency layers.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedImage {
    pub height: usize,
    pub width: usize,
    pub candidates: Vec<CropCandidate>,
    /// `(ASS, std, max)` of the saliency map inside each candidate.
    pub stats: Vec<(f64, f64, f64)>,
    /// Candidate indices by descending ASS, ties in grid order.
    pub ranked: Vec<usize>,
    pub histogram: Vec<f64>,
    /// Stacked saliency layers pooled to the global grid.
    pub d16: Vec<f64>,
    pub d4: ChannelTensor,
    pub d8: ChannelTensor,
    pub content_hash: u64,
}

/// YUV, upscaled so the shorter side fits one crop.
pub fn canonical_image(img: &RasterImage, config: &QualityConfig) -> Result<RasterImage> {
    let yuv = match img.colorspace() {
        ColorSpace::Yuv => img.clone(),
        ColorSpace::Rgb => rgb_yuv_convert(img, ColorSpace::Yuv)?,
        ColorSpace::Gray => rgb_yuv_convert(&img.to_rgb(), ColorSpace::Yuv)?,
    };
    yuv.ensure_min_side(config.crop_size)
}

pub fn load_canonical(path: impl AsRef<Path>, config: &QualityConfig) -> Result<RasterImage> {
    canonical_image(&RasterImage::load(path)?, config)
}

fn content_hash(img: &RasterImage) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &v in img.samples() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Runs the saliency stage on a canonical image and summarises it.
pub fn prepare_image(saliency: &SaliencyModel, config: &QualityConfig, img: &RasterImage) -> Result<PreparedImage> {
    let lf = build_layer_features(saliency, img)?;
    let map = saliency_predict_from(saliency, &lf, img.height(), img.width())?;
    let candidates = crop_candidates(img, config.crop_size, config.crop_stride)?;
    let stats = candidates.iter().map(|c| map.crop_stats(c)).collect::<Result<Vec<_>>>()?;
    let ass: Vec<f64> = stats.iter().map(|s| s.0).collect();
    Ok(PreparedImage {
        height: img.height(),
        width: img.width(),
        ranked: rank_by_score(&ass),
        candidates,
        stats,
        histogram: saliency_histogram(&map, config.hist_bins),
        d16: lf.grid.resize_area(config.global_grid, config.global_grid).into_values(),
        d4: lf.d4().clone(),
        d8: lf.d8().clone(),
        content_hash: content_hash(img),
    })
}

/// Candidate indices of the `k` sub-images used for an image: top ASS with
/// cyclic repetition, or uniform random draws with replacement.
pub fn select_crops(prep: &PreparedImage, config: &QualityConfig) -> Vec<usize> {
    if config.saliency_crop {
        prep.ranked.iter().cycle().take(config.k).copied().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ prep.content_hash);
        (0..config.k).map(|_| rng.random_range(0..prep.candidates.len())).collect()
    }
}

/// Distinct entries in first-appearance order with their multiplicities.
fn unique_counts(sel: &[usize]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for &s in sel {
        match out.iter_mut().find(|(c, _)| *c == s) {
            Some(e) => e.1 += 1.0,
            None => out.push((s, 1.0)),
        }
    }
    out
}

fn local_rows(state: &FeatureState, img: &RasterImage, prep: &PreparedImage, unique: &[(usize, f64)]) -> Result<Vec<Vec<f32>>> {
    unique
        .iter()
        .map(|&(c, _)| {
            let f = crop_features(state, img, &prep.candidates[c], &prep.d4, &prep.d8)?;
            Ok(f.values.iter().map(|&v| v as f32).collect())
        })
        .collect()
}

/// Scores an image whose saliency stage has already run.
pub fn predict_prepared(model: &QualityModel, img: &RasterImage, prep: &PreparedImage) -> Result<f64> {
    let cfg = &model.config;
    let sel = select_crops(prep, cfg);
    let unique = unique_counts(&sel);
    let rows = local_rows(&model.features, img, prep, &unique)?;
    let mut score_of = HashMap::new();
    for ((c, _), row) in unique.iter().zip(&rows) {
        let row64: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        let reduced: Vec<f32> = rft_apply_row(&model.local_rft, &row64)?.iter().map(|&v| v as f32).collect();
        score_of.insert(*c, model.local_ensemble.predict_row(&reduced)?);
    }
    let local: Vec<f64> = sel.iter().map(|c| score_of[c]).collect();
    let stats: Vec<(f64, f64, f64)> = sel.iter().map(|&c| prep.stats[c]).collect();
    let g = global_vector(cfg, &local, &stats, &prep.histogram, &prep.d16, model.global_rft.as_ref())?;
    let g32: Vec<f32> = g.iter().map(|&v| v as f32).collect();
    let raw = model.global_ensemble.predict_row(&g32)?;
    Ok(raw.clamp(model.score_range.0, model.score_range.1))
}

/// Prepared images keyed by path; valid for one saliency model and one crop
/// configuration.
#[derive(Debug, Default)]
pub struct PrepCache {
    entries: HashMap<PathBuf, PreparedImage>,
}

impl PrepCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn get_or_prepare(&mut self, path: &Path, saliency: &SaliencyModel, config: &QualityConfig) -> Result<&PreparedImage> {
        if !self.entries.contains_key(path) {
            let img = load_canonical(path, config)?;
            let prep = prepare_image(saliency, config, &img)?;
            self.entries.insert(path.to_path_buf(), prep);
        }
        Ok(&self.entries[path])
    }
}

/// A fitted model with the per-round diagnostics of local training.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub model: QualityModel,
    /// Per outer round: the local targets after the update.
    pub label_history: Vec<QualityLabels>,
    /// Validation RMSE of per-image mean local scores, per outer round.
    pub validation_rmse: Vec<f64>,
}

struct ImageRows {
    sel: Vec<usize>,
    unique: Vec<(usize, f64)>,
    first_row: usize,
}

fn extract_set(
    manifest: &DatasetManifest,
    indices: &[usize],
    preps: &[PreparedImage],
    state: &FeatureState,
    config: &QualityConfig,
) -> Result<(Matrix, Vec<ImageRows>)> {
    let mut x = Matrix::zeros(0, config.features.dim());
    let mut meta = Vec::with_capacity(indices.len());
    for (&i, prep) in indices.iter().zip(preps) {
        let img = load_canonical(manifest.path(i), config)?;
        let sel = select_crops(prep, config);
        let unique = unique_counts(&sel);
        let first_row = x.rows();
        for row in local_rows(state, &img, prep, &unique)? {
            x.push_row(&row)?;
        }
        meta.push(ImageRows { sel, unique, first_row });
    }
    Ok((x, meta))
}

fn fit_features(
    manifest: &DatasetManifest,
    indices: &[usize],
    preps: &[PreparedImage],
    metas: &[Vec<(usize, f64)>],
    config: &QualityConfig,
) -> Result<FeatureState> {
    // round-robin over images: every image's best crop first, then seconds
    let mut picks: Vec<Vec<usize>> = vec![Vec::new(); indices.len()];
    let mut total = 0;
    let mut pass = 0;
    while total < config.max_fit_crops {
        let mut any = false;
        for (j, u) in metas.iter().enumerate() {
            if total >= config.max_fit_crops {
                break;
            }
            if let Some(&(c, _)) = u.get(pass) {
                picks[j].push(c);
                total += 1;
                any = true;
            }
        }
        if !any {
            break;
        }
        pass += 1;
    }
    let mut crops = Vec::with_capacity(total);
    for (j, p) in picks.iter().enumerate() {
        if p.is_empty() {
            continue;
        }
        let img = load_canonical(manifest.path(indices[j]), config)?;
        for &c in p {
            crops.push(img.crop(&preps[j].candidates[c])?);
        }
    }
    FeatureState::fit(&config.features, &crops)
}

/// Trains every quality stage on `train` (manifest indices), using `val`
/// only to choose the number of outer relaxation rounds.
pub fn train_pipeline_cached(
    manifest: &DatasetManifest,
    train: &[usize],
    val: &[usize],
    saliency: &SaliencyModel,
    config: &QualityConfig,
    cache: &mut PrepCache,
) -> Result<TrainedPipeline> {
    config.validate()?;
    if train.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "quality training needs at least 4 images, got {}",
            train.len()
        )));
    }
    if let Some(i) = train.iter().chain(val).find(|&&i| i >= manifest.len()) {
        return Err(invalid(format!("image index {i} outside the manifest")));
    }
    let mut prep_of = |idx: &[usize]| -> Result<Vec<PreparedImage>> {
        idx.iter()
            .map(|&i| cache.get_or_prepare(&manifest.path(i), saliency, config).cloned())
            .collect()
    };
    let train_prep = prep_of(train)?;
    let val_prep = prep_of(val)?;
    let q_train: Vec<f64> = train.iter().map(|&i| manifest.entries[i].mos).collect();
    let q_val: Vec<f64> = val.iter().map(|&i| manifest.entries[i].mos).collect();

    let uniques: Vec<Vec<(usize, f64)>> = train_prep.iter().map(|p| unique_counts(&select_crops(p, config))).collect();
    let state = fit_features(manifest, train, &train_prep, &uniques, config)?;

    let (x_train, rows_train) = extract_set(manifest, train, &train_prep, &state, config)?;
    let mut image_of = Vec::with_capacity(x_train.rows());
    let mut weights = Vec::with_capacity(x_train.rows());
    for (j, r) in rows_train.iter().enumerate() {
        for &(_, w) in &r.unique {
            image_of.push(j);
            weights.push(w);
        }
    }
    let labels = QualityLabels::uniform(q_train.clone(), image_of, weights)?;

    let local_rft = rft_rank_weighted(&x_train, &labels.local, &labels.weights, config.rft_bins)?
        .truncated(config.local_keep.min(x_train.cols()))?;
    let xs_train = rft_apply(&local_rft, &x_train, local_rft.kept)?;
    drop(x_train);

    let params = config.effective_local();
    let rounds = train_local(&xs_train, labels, &params)?;

    let mut validation_rmse = Vec::new();
    let mut chosen = rounds.len() - 1;
    if !val.is_empty() && rounds.len() > 1 {
        let (x_val, rows_val) = extract_set(manifest, val, &val_prep, &state, config)?;
        let xs_val = rft_apply(&local_rft, &x_val, local_rft.kept)?;
        for r in &rounds {
            let p = gbrt_predict(&r.ensemble, &xs_val)?;
            let se: f64 = rows_val
                .iter()
                .zip(&q_val)
                .map(|(m, q)| {
                    let (mut s, mut w) = (0.0, 0.0);
                    for (u, &(_, wt)) in m.unique.iter().enumerate() {
                        s += wt * p[m.first_row + u];
                        w += wt;
                    }
                    (s / w - q).powi(2)
                })
                .sum();
            validation_rmse.push((se / q_val.len() as f64).sqrt());
        }
        chosen = (0..validation_rmse.len())
            .min_by(|&a, &b| validation_rmse[a].total_cmp(&validation_rmse[b]))
            .unwrap_or(chosen);
    }
    let local_ensemble = rounds[chosen].ensemble.clone();

    let p_train = gbrt_predict(&local_ensemble, &xs_train)?;
    let local_scores: Vec<Vec<f64>> = rows_train
        .iter()
        .map(|m| {
            let pos: HashMap<usize, usize> = m.unique.iter().enumerate().map(|(u, &(c, _))| (c, u)).collect();
            m.sel.iter().map(|c| p_train[m.first_row + pos[c]]).collect()
        })
        .collect();

    let global_rft = if config.saliency_global {
        let d16 = Matrix::from_rows(&train_prep.iter().map(|p| p.d16.clone()).collect::<Vec<_>>())?;
        Some(rft_rank(&d16, &q_train, config.rft_bins)?.truncated(config.global_keep.min(d16.cols()))?)
    } else {
        None
    };
    let mut g_rows = Vec::with_capacity(train.len());
    for ((prep, m), scores) in train_prep.iter().zip(&rows_train).zip(&local_scores) {
        let stats: Vec<(f64, f64, f64)> = m.sel.iter().map(|&c| prep.stats[c]).collect();
        g_rows.push(global_vector(config, scores, &stats, &prep.histogram, &prep.d16, global_rft.as_ref())?);
    }
    let mut global_params = config.global_gbrt.clone();
    global_params.seed = config.seed.wrapping_add(1);
    let global_ensemble = gbrt_fit(&Matrix::from_rows(&g_rows)?, &q_train, &global_params)?;

    let score_range = q_train.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &q| {
        (lo.min(q), hi.max(q))
    });
    Ok(TrainedPipeline {
        model: QualityModel {
            config: config.clone(),
            saliency: saliency.clone(),
            features: state,
            local_rft,
            local_ensemble,
            global_rft,
            global_ensemble,
            score_range,
            outer_rounds_used: chosen + 1,
        },
        label_history: rounds.into_iter().map(|r| r.labels).collect(),
        validation_rmse,
    })
}

/// Trains on a training manifest, with an optional validation manifest.
pub fn train_pipeline(
    train: &DatasetManifest,
    val: Option<&DatasetManifest>,
    saliency: &SaliencyModel,
    config: &QualityConfig,
) -> Result<QualityModel> {
    let mut entries = train.entries.clone();
    let mut cache = PrepCache::default();
    // resolve each manifest's paths against its own directory
    for e in &mut entries {
        e.image_path = train.base.join(&e.image_path).to_string_lossy().into_owned();
    }
    let n_train = entries.len();
    if let Some(v) = val {
        for e in &v.entries {
            let mut e = e.clone();
            e.image_path = v.base.join(&e.image_path).to_string_lossy().into_owned();
            entries.push(e);
        }
    }
    let combined = DatasetManifest::new(PathBuf::new(), entries)?;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..combined.len()).collect();
    Ok(train_pipeline_cached(&combined, &train_idx, &val_idx, saliency, config, &mut cache)?.model)
}
