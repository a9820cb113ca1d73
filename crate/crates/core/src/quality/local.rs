//! Local sub-image scores with iterative target relaxation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gbrt::{gbrt_fit_weighted, GbrtParams, TreeEnsemble};
use crate::matrix::Matrix;

/// Global scores `Q_j` and per-row local targets `q_ij`. Rows stand for
/// distinct sub-images; `weights` counts how often each was selected, so a
/// weighted mean over an image's rows equals the mean over its `k` crops.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityLabels {
    pub global: Vec<f64>,
    pub local: Vec<f64>,
    pub image_of: Vec<usize>,
    pub weights: Vec<f64>,
}

impl QualityLabels {
    /// Every local target starts at its image's global score.
    pub fn uniform(global: Vec<f64>, image_of: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if image_of.len() != weights.len() {
            return Err(invalid("row-to-image map and weights differ in length"));
        }
        let mut seen = vec![false; global.len()];
        for &j in &image_of {
            *seen.get_mut(j).ok_or_else(|| invalid(format!("row refers to image {j}")))? = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("every image needs at least one sub-image"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(invalid("sub-image weights must be positive"));
        }
        let local = image_of.iter().map(|&j| global[j]).collect();
        Ok(Self {
            global,
            local,
            image_of,
            weights,
        })
    }

    /// Weighted per-image means of a per-row quantity. Images with a single
    /// row return that row's value exactly.
    pub fn image_means(&self, values: &[f64]) -> Vec<f64> {
        let n = self.global.len();
        let (mut s, mut w, mut rows) = (vec![0.0; n], vec![0.0; n], vec![0usize; n]);
        let mut last = vec![0.0; n];
        for ((&j, &v), &wt) in self.image_of.iter().zip(values).zip(&self.weights) {
            s[j] += wt * v;
            w[j] += wt;
            rows[j] += 1;
            last[j] = v;
        }
        (0..n)
            .map(|j| if rows[j] == 1 { last[j] } else { s[j] / w[j] })
            .collect()
    }

    /// `q_ij <- p_ij + step (Q_j - mean_i p_ij)`; with `step = 1` the
    /// per-image mean of the new targets is `Q_j`.
    pub fn relax(&mut self, pred: &[f64], step: f64) {
        let means = self.image_means(pred);
        for (r, q) in self.local.iter_mut().enumerate() {
            let j = self.image_of[r];
            *q = (pred[r] - step * means[j]) + step * self.global[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalParams {
    pub outer_rounds: usize,
    pub step: f64,
    pub tolerance: f64,
    pub gbrt: GbrtParams,
}

impl Default for LocalParams {
    fn default() -> Self {
        Self {
            outer_rounds: 4,
            step: 1.0,
            tolerance: 1e-4,
            gbrt: GbrtParams::default(),
        }
    }
}

/// One outer round: the ensemble fitted on the targets in force, and the
/// targets after the update.
#[derive(Debug, Clone)]
pub struct LocalRound {
    pub ensemble: TreeEnsemble,
    pub labels: QualityLabels,
    /// `max_j |Q_j - mean_i p_ij|` for this round's predictions.
    pub gap: f64,
}

/// Alternates regressor fitting with target relaxation. Returns every
/// round; the last round's ensemble and labels are the converged state.
pub fn train_local(features: &Matrix, labels: QualityLabels, params: &LocalParams) -> Result<Vec<LocalRound>> {
    if params.outer_rounds < 1 {
        return Err(invalid("local training needs at least one outer round"));
    }
    if features.rows() != labels.local.len() {
        return Err(invalid(format!(
            "{} feature rows for {} local targets",
            features.rows(),
            labels.local.len()
        )));
    }
    let mut labels = labels;
    let mut rounds: Vec<LocalRound> = Vec::with_capacity(params.outer_rounds);
    for _ in 0..params.outer_rounds {
        let (ensemble, _) = gbrt_fit_weighted(features, &labels.local, &labels.weights, &params.gbrt)?;
        let pred: Vec<f64> = (0..features.rows())
            .map(|r| ensemble.predict_staged(features.row(r), ensemble.rounds()))
            .collect();
        let gap = labels
            .image_means(&pred)
            .iter()
            .zip(&labels.global)
            .map(|(m, q)| (q - m).abs())
            .fold(0.0, f64::max);
        labels.relax(&pred, params.step);
        let converged = rounds.last().is_some_and(|r| (r.gap - gap).abs() < params.tolerance);
        rounds.push(LocalRound {
            ensemble,
            labels: labels.clone(),
            gap,
        });
        if converged {
            break;
        }
    }
    Ok(rounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relax_preserves_means() {
        let mut l = QualityLabels::uniform(
            vec![3.0, 1.5],
            vec![0, 0, 0, 1, 1],
            vec![2.0, 1.0, 4.0, 1.0, 3.0],
        )
        .unwrap();
        l.relax(&[2.7, 3.9, 1.1, 0.3, 2.2], 1.0);
        let m = l.image_means(&l.local.clone());
        assert!((m[0] - 3.0).abs() < 1e-12 && (m[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn single_crop_targets_stay_global() {
        let q = vec![0.1, 0.7, 0.3, 2.9, 4.4];
        let mut l = QualityLabels::uniform(q.clone(), (0..5).collect(), vec![35.0; 5]).unwrap();
        l.relax(&[0.2, 0.123, 9.1, -4.0, 1e-9], 1.0);
        assert_eq!(l.local, q);
    }

    #[test]
    fn uniform_checks_coverage() {
        assert!(QualityLabels::uniform(vec![1.0, 2.0], vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(QualityLabels::uniform(vec![1.0], vec![0], vec![0.0]).is_err());
    }

    #[test]
    fn rounds_and_errors() {
        let x = Matrix::from_rows(&(0..12).map(|i| vec![i as f64, (i % 3) as f64]).collect::<Vec<_>>()).unwrap();
        let labels = QualityLabels::uniform(
            vec![1.0, 2.0, 3.0, 4.0],
            (0..12).map(|i| i / 3).collect(),
            vec![1.0; 12],
        )
        .unwrap();
        let params = LocalParams {
            outer_rounds: 3,
            gbrt: GbrtParams {
                rounds: 10,
                min_samples_leaf: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let rounds = train_local(&x, labels.clone(), &params).unwrap();
        assert!(!rounds.is_empty() && rounds.len() <= 3);
        for r in &rounds {
            let m = r.labels.image_means(&r.labels.local);
            for (a, b) in m.iter().zip(&r.labels.global) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        let bad = LocalParams {
            outer_rounds: 0,
            ..params
        };
        assert!(train_local(&x, labels, &bad).is_err());
    }
}
