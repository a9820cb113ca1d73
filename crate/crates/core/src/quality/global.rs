//! Global feature vector: sorted local scores, saliency statistics and the
//! selected coarse saliency-layer features.

use crate::error::{invalid, Result};
use crate::imageio::CropCandidate;
use crate::saliency::SaliencyMap;
use crate::selection::{rft_apply_row, RftSelection};
use crate::transforms::ChannelTensor;

use super::QualityConfig;

/// Normalised histogram of map values over `bins` equal bins of `[0, 1]`.
pub fn saliency_histogram(map: &SaliencyMap, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &v in map.values() {
        h[((v * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    let n = map.values().len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// Assembles the global vector from precomputed pieces. `crop_stats` holds
/// `(mean, std, max)` of the map inside each selected crop, in selection
/// order.
pub fn global_vector(
    config: &QualityConfig,
    local_scores: &[f64],
    crop_stats: &[(f64, f64, f64)],
    histogram: &[f64],
    d16: &[f64],
    global_rft: Option<&RftSelection>,
) -> Result<Vec<f64>> {
    if local_scores.len() != config.k {
        return Err(invalid(format!(
            "expected {} local scores, got {}",
            config.k,
            local_scores.len()
        )));
    }
    let mut out = local_scores.to_vec();
    out.sort_by(|a, b| b.total_cmp(a));
    if !config.saliency_global {
        return Ok(out);
    }
    if crop_stats.len() != config.k || histogram.len() != config.hist_bins {
        return Err(invalid("saliency statistics do not match the configuration"));
    }
    for &(m, s, x) in crop_stats {
        out.extend([m, s, x]);
    }
    out.extend_from_slice(histogram);
    let sel = global_rft.ok_or_else(|| invalid("saliency-global features need a global selection"))?;
    out.extend(rft_apply_row(sel, d16)?);
    Ok(out)
}

/// Global vector from a saliency map, the selected crops and the stacked
/// grid tensor of the saliency layers.
pub fn assemble_global_features(
    config: &QualityConfig,
    local_scores: &[f64],
    map: &SaliencyMap,
    crops: &[CropCandidate],
    d16: &ChannelTensor,
    global_rft: Option<&RftSelection>,
) -> Result<Vec<f64>> {
    if crops.len() != config.k {
        return Err(invalid(format!("expected {} crops, got {}", config.k, crops.len())));
    }
    let stats = crops.iter().map(|c| map.crop_stats(c)).collect::<Result<Vec<_>>>()?;
    let hist = saliency_histogram(map, config.hist_bins);
    let grid = d16.resize_area(config.global_grid, config.global_grid).into_values();
    global_vector(config, local_scores, &stats, &hist, &grid, global_rft)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::rft_rank;
    use crate::Matrix;

    fn setup() -> (QualityConfig, RftSelection, ChannelTensor) {
        let cfg = QualityConfig::default();
        let d = 51 * cfg.global_grid * cfg.global_grid;
        let rows: Vec<Vec<f64>> = (0..8).map(|r| (0..d).map(|c| ((r * 7 + c * 3) % 11) as f64).collect()).collect();
        let sel = rft_rank(&Matrix::from_rows(&rows).unwrap(), &(0..8).map(f64::from).collect::<Vec<_>>(), 16)
            .unwrap()
            .truncated(cfg.global_keep)
            .unwrap();
        let t = ChannelTensor::from_vec(51, 20, 20, (0..51 * 400).map(|i| (i % 13) as f64).collect()).unwrap();
        (cfg, sel, t)
    }

    fn crops(k: usize) -> Vec<CropCandidate> {
        (0..k)
            .map(|i| CropCandidate {
                row_offset: (i % 3) * 32,
                col_offset: (i / 3 % 3) * 32,
                size: 256,
            })
            .collect()
    }

    #[test]
    fn default_width_is_800() {
        let (cfg, sel, t) = setup();
        let map = SaliencyMap::uniform(320, 320, 0.25).unwrap();
        let scores: Vec<f64> = (0..35).map(|i| i as f64 * 0.1).collect();
        let v = assemble_global_features(&cfg, &scores, &map, &crops(35), &t, Some(&sel)).unwrap();
        assert_eq!(v.len(), 800);
        assert_eq!(cfg.global_dim(), 800);
        for c in 0..35 {
            assert_eq!(&v[35 + 3 * c..38 + 3 * c], &[0.25, 0.0, 0.25]);
        }
        let hist = &v[140..200];
        assert_eq!(hist.iter().filter(|h| **h != 0.0).count(), 1);
        assert_eq!(hist.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn local_score_order_is_irrelevant() {
        let (cfg, sel, t) = setup();
        let map = SaliencyMap::uniform(320, 320, 0.6).unwrap();
        let scores: Vec<f64> = (0..35).map(|i| ((i * 17) % 35) as f64).collect();
        let mut rev = scores.clone();
        rev.reverse();
        let a = assemble_global_features(&cfg, &scores, &map, &crops(35), &t, Some(&sel)).unwrap();
        let b = assemble_global_features(&cfg, &rev, &map, &crops(35), &t, Some(&sel)).unwrap();
        assert_eq!(a, b);
        assert!(assemble_global_features(&cfg, &scores[..34], &map, &crops(35), &t, Some(&sel)).is_err());
    }

    #[test]
    fn scores_only_without_saliency_global() {
        let cfg = QualityConfig {
            saliency_global: false,
            ..Default::default()
        };
        let v = global_vector(&cfg, &[1.0; 35], &[], &[], &[], None).unwrap();
        assert_eq!(v.len(), 35);
        assert_eq!(cfg.global_dim(), 35);
    }
}
