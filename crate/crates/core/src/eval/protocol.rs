//! Repeated random-split experiments.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use super::metrics::{median, plcc, srocc};
use crate::error::{invalid, Result};
use crate::quality::{load_canonical, predict_prepared, prepare_image, train_pipeline_cached, PrepCache, QualityConfig, TrainedPipeline};
use crate::saliency::SaliencyModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub runs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Share of the non-test images held out for validation.
    pub val_fraction: f64,
    /// Predictions timed for the per-image latency median.
    pub timing_images: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            runs: 10,
            seed: 0,
            test_fraction: 0.2,
            val_fraction: 0.1,
            timing_images: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into disjoint train, validation and test sets.
pub fn split_indices(n: usize, test_fraction: f64, val_fraction: f64, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(invalid(format!("experiments need at least 10 images, got {n}")));
    }
    if !(0.0..1.0).contains(&test_fraction) || !(0.0..1.0).contains(&val_fraction) {
        return Err(invalid("split fractions must lie in [0, 1)"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 4);
    let rest = n - n_test;
    let n_val = ((rest as f64 * val_fraction).round() as usize).min(rest - 4);
    let test = idx[..n_test].to_vec();
    let val = idx[n_test..n_test + n_val].to_vec();
    let train = idx[n_test + n_val..].to_vec();
    Ok(Split { train, val, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub plcc: Option<f64>,
    pub srocc: Option<f64>,
    /// Set when a metric is undefined, e.g. constant predictions.
    pub note: Option<String>,
    pub outer_rounds_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: Vec<RunMetrics>,
    pub median_plcc: Option<f64>,
    pub median_srocc: Option<f64>,
    /// Median single-image latency from decoded pixels to score.
    pub timing_ms: f64,
    pub model_size_bytes: u64,
    pub protocol: Protocol,
    pub config: QualityConfig,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The report with wall-clock timing zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self {
            timing_ms: 0.0,
            ..self.clone()
        }
    }
}

/// Runs the protocol; see [`run_experiment_with`].
pub fn run_experiment(
    manifest: &DatasetManifest,
    saliency: &SaliencyModel,
    config: &QualityConfig,
    protocol: &Protocol,
) -> Result<MetricsReport> {
    run_experiment_with(manifest, saliency, config, protocol, &mut PrepCache::default(), |_, _, _| Ok(()))
}

/// Per run `r`: split with seed `protocol.seed + r`, train with that seed,
/// score the test images. `on_run` sees every trained pipeline. The
/// saliency stage of each image is computed once and cached.
pub fn run_experiment_with(
    manifest: &DatasetManifest,
    saliency: &SaliencyModel,
    config: &QualityConfig,
    protocol: &Protocol,
    cache: &mut PrepCache,
    mut on_run: impl FnMut(usize, &TrainedPipeline, &Split) -> Result<()>,
) -> Result<MetricsReport> {
    if protocol.runs == 0 {
        return Err(invalid("experiments need at least one run"));
    }
    let mut runs = Vec::with_capacity(protocol.runs);
    let mut timing_ms = 0.0;
    let mut model_size_bytes = 0;
    for r in 0..protocol.runs {
        let seed = protocol.seed.wrapping_add(r as u64);
        let split = split_indices(manifest.len(), protocol.test_fraction, protocol.val_fraction, seed)?;
        assert!(
            split.test.iter().all(|t| !split.train.contains(t) && !split.val.contains(t)),
            "test images leaked into training"
        );
        let cfg = QualityConfig {
            seed,
            ..config.clone()
        };
        let trained = train_pipeline_cached(manifest, &split.train, &split.val, saliency, &cfg, cache)?;
        let model = &trained.model;
        let mut pred = Vec::with_capacity(split.test.len());
        let mut subj = Vec::with_capacity(split.test.len());
        for &i in &split.test {
            let img = load_canonical(manifest.path(i), &cfg)?;
            let prep = prepare_image(&model.saliency, &cfg, &img)?;
            pred.push(predict_prepared(model, &img, &prep)?);
            subj.push(manifest.entries[i].mos);
        }
        let (p, s) = (plcc(&pred, &subj), srocc(&pred, &subj));
        let note = p.as_ref().err().or(s.as_ref().err()).map(|e| e.to_string());
        runs.push(RunMetrics {
            run: r,
            seed,
            n_train: split.train.len(),
            n_val: split.val.len(),
            n_test: split.test.len(),
            plcc: p.ok(),
            srocc: s.ok(),
            note,
            outer_rounds_used: model.outer_rounds_used,
        });
        if r == 0 {
            model_size_bytes = model.to_bytes()?.len() as u64;
            timing_ms = time_predictions(manifest, &split.test, model, protocol.timing_images)?;
        }
        on_run(r, &trained, &split)?;
    }
    let plccs: Vec<f64> = runs.iter().filter_map(|r| r.plcc).collect();
    let sroccs: Vec<f64> = runs.iter().filter_map(|r| r.srocc).collect();
    Ok(MetricsReport {
        median_plcc: median(&plccs),
        median_srocc: median(&sroccs),
        runs,
        timing_ms,
        model_size_bytes,
        protocol: protocol.clone(),
        config: config.clone(),
    })
}

fn time_predictions(
    manifest: &DatasetManifest,
    test: &[usize],
    model: &crate::quality::QualityModel,
    count: usize,
) -> Result<f64> {
    let decoded = test
        .iter()
        .take(count.max(1))
        .map(|&i| crate::RasterImage::load(manifest.path(i)))
        .collect::<Result<Vec<_>>>()?;
    let mut ms = Vec::with_capacity(count.max(1));
    for img in decoded.iter().cycle().take(count.max(1)) {
        let t = Instant::now();
        std::hint::black_box(crate::quality::predict_quality(model, img)?);
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(&ms).unwrap_or(0.0))
}
