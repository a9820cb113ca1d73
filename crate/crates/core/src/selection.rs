//! Relevant feature test: rank each feature by how well a single threshold
//! split on it explains the regression target.
//!
//! For every feature the range `[min, max]` is cut by `B - 1` uniform
//! thresholds. Each threshold splits the samples (`x <= t` goes left); the
//! cost of a side is its sum of squared deviations from the side mean, and
//! the feature's loss is the smallest `(left + right) / N` over thresholds.
//! Features are ranked by ascending loss, ties by index.

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RftSelection {
    /// Feature indices, best first.
    pub ranked_indices: Vec<usize>,
    /// Loss of `ranked_indices[i]`.
    pub losses: Vec<f64>,
    pub kept: usize,
}

impl RftSelection {
    pub fn selected(&self) -> &[usize] {
        &self.ranked_indices[..self.kept]
    }

    /// Truncates the ranking to its best `keep` features.
    pub fn truncated(mut self, keep: usize) -> Result<Self> {
        if keep > self.ranked_indices.len() {
            return Err(invalid(format!(
                "cannot keep {keep} of {} ranked features",
                self.ranked_indices.len()
            )));
        }
        self.ranked_indices.truncate(keep);
        self.losses.truncate(keep);
        self.kept = keep;
        Ok(self)
    }
}

/// Weighted best-split loss of one feature column against centred targets.
pub(crate) fn feature_loss(column: &[f32], targets: &[f64], weights: &[f64], bins: usize) -> f64 {
    let total_w: f64 = weights.iter().sum();
    let total_s: f64 = targets.iter().zip(weights).map(|(y, w)| w * y).sum();
    let total_q: f64 = targets.iter().zip(weights).map(|(y, w)| w * y * y).sum();
    let no_split = side_cost(total_w, total_s, total_q);

    let (lo, hi) = column.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v as f64), hi.max(v as f64))
    });
    if !(hi > lo) {
        return no_split / total_w;
    }
    let span = hi - lo;
    let threshold = |b: usize| lo + b as f64 * span / bins as f64;

    let mut bw = vec![0.0; bins];
    let mut bs = vec![0.0; bins];
    let mut bq = vec![0.0; bins];
    for ((&x, &y), &w) in column.iter().zip(targets).zip(weights) {
        let x = x as f64;
        // bin j holds samples with t_j < x <= t_{j+1}
        let mut j = (((x - lo) / span) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        while j >= 1 && x <= threshold(j) {
            j -= 1;
        }
        while j + 1 < bins && x > threshold(j + 1) {
            j += 1;
        }
        bw[j] += w;
        bs[j] += w * y;
        bq[j] += w * y * y;
    }

    let mut best = no_split;
    let (mut lw, mut ls, mut lq) = (0.0, 0.0, 0.0);
    for b in 1..bins {
        lw += bw[b - 1];
        ls += bs[b - 1];
        lq += bq[b - 1];
        let cost = side_cost(lw, ls, lq) + side_cost(total_w - lw, total_s - ls, total_q - lq);
        if cost < best {
            best = cost;
        }
    }
    best / total_w
}

fn side_cost(w: f64, s: f64, q: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        (q - s * s / w).max(0.0)
    }
}

/// Ranks every column of `features` (N x D) against `targets`.
pub fn rft_rank(features: &Matrix, targets: &[f64], bins: usize) -> Result<RftSelection> {
    let weights = vec![1.0; features.rows()];
    rft_rank_weighted(features, targets, &weights, bins)
}

/// As [`rft_rank`], with per-row weights; a row of weight `k` counts as `k`
/// identical rows.
pub fn rft_rank_weighted(
    features: &Matrix,
    targets: &[f64],
    weights: &[f64],
    bins: usize,
) -> Result<RftSelection> {
    let n = features.rows();
    if targets.len() != n || weights.len() != n {
        return Err(invalid(format!(
            "{n} feature rows but {} targets and {} weights",
            targets.len(),
            weights.len()
        )));
    }
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "feature test needs at least 4 samples, got {n}"
        )));
    }
    if bins < 2 {
        return Err(invalid("feature test needs at least 2 bins"));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("row weights must be positive"));
    }
    let total_w: f64 = weights.iter().sum();
    let mean = targets.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total_w;
    let centred: Vec<f64> = targets.iter().map(|y| y - mean).collect();

    let d = features.cols();
    let mut column = vec![0.0f32; n];
    let mut losses: Vec<(f64, usize)> = (0..d)
        .map(|f| {
            for (r, c) in column.iter_mut().enumerate() {
                *c = features.get(r, f);
            }
            (feature_loss(&column, &centred, weights, bins), f)
        })
        .collect();
    losses.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(RftSelection {
        ranked_indices: losses.iter().map(|l| l.1).collect(),
        losses: losses.iter().map(|l| crate::snap(l.0)).collect(),
        kept: d,
    })
}

/// Gathers the `keep` best columns in ranking order.
pub fn rft_apply(selection: &RftSelection, features: &Matrix, keep: usize) -> Result<Matrix> {
    if keep > selection.ranked_indices.len() {
        return Err(invalid(format!(
            "cannot keep {keep} of {} ranked features",
            selection.ranked_indices.len()
        )));
    }
    features.select_columns(&selection.ranked_indices[..keep])
}

/// Gathers selected entries from a single `f64` vector.
pub fn rft_apply_row(selection: &RftSelection, row: &[f64]) -> Result<Vec<f64>> {
    selection
        .selected()
        .iter()
        .map(|&i| {
            row.get(i)
                .copied()
                .ok_or_else(|| invalid(format!("feature {i} outside a row of {}", row.len())))
        })
        .collect()
}
