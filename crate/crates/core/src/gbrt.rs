//! Gradient-boosted regression trees with squared loss.
//!
//! Each round fits one depth-bounded tree to the current residuals with an
//! exact greedy split search: every feature, every midpoint between
//! consecutive distinct values. Trees grow level by level over presorted
//! columns, so a level costs one pass over each sampled column.
//!
//! Thresholds, leaf values and the base score are rounded to `f32` as they
//! are learned, so a model read back from its single-precision file predicts
//! exactly what the in-memory model did.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::snap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbrtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
    /// Minimum total row weight on each side of a split.
    pub min_samples_leaf: f64,
    /// Fraction of features sampled (without replacement) for each tree.
    pub colsample: f64,
    pub seed: u64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        Self {
            rounds: 300,
            max_depth: 4,
            shrinkage: 0.1,
            min_samples_leaf: 5.0,
            colsample: 1.0,
            seed: 0,
        }
    }
}

pub const LEAF: u32 = u32::MAX;

/// Fixed-width tree node. Leaves have `feature == LEAF` and keep their value
/// in `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f32,
    pub left: u32,
    pub right: u32,
}

impl Node {
    pub fn leaf(value: f64) -> Self {
        Self {
            feature: LEAF,
            threshold: value as f32,
            left: 0,
            right: 0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    pub fn predict(&self, row: &[f32]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return n.threshold as f64;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub base_score: f64,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub n_features: usize,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// Prediction from the base score and the first `n_trees` trees.
    #[inline]
    pub fn predict_staged(&self, row: &[f32], n_trees: usize) -> f64 {
        let mut out = self.base_score;
        for t in &self.trees[..n_trees] {
            out += self.shrinkage * t.predict(row);
        }
        out
    }

    pub fn predict_row(&self, row: &[f32]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(invalid(format!(
                "model expects {} features, row has {}",
                self.n_features,
                row.len()
            )));
        }
        Ok(self.predict_staged(row, self.trees.len()))
    }
}

/// Predicts every row of `features`.
pub fn gbrt_predict(model: &TreeEnsemble, features: &Matrix) -> Result<Vec<f64>> {
    if features.cols() != model.n_features {
        return Err(invalid(format!(
            "model expects {} features, matrix has {}",
            model.n_features,
            features.cols()
        )));
    }
    Ok((0..features.rows())
        .map(|r| model.predict_staged(features.row(r), model.trees.len()))
        .collect())
}

/// Fits an ensemble with unit row weights.
pub fn gbrt_fit(features: &Matrix, targets: &[f64], params: &GbrtParams) -> Result<TreeEnsemble> {
    let weights = vec![1.0; features.rows()];
    Ok(gbrt_fit_weighted(features, targets, &weights, params)?.0)
}

/// Fits an ensemble; returns it with the weighted training MSE after the
/// base score (entry 0) and after each round.
pub fn gbrt_fit_weighted(
    features: &Matrix,
    targets: &[f64],
    weights: &[f64],
    params: &GbrtParams,
) -> Result<(TreeEnsemble, Vec<f64>)> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::InsufficientData("boosting needs training rows".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "boosting needs at least 2 rows, got {n}"
        )));
    }
    if targets.len() != n || weights.len() != n {
        return Err(invalid(format!(
            "{n} rows but {} targets and {} weights",
            targets.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("row weights must be positive"));
    }
    if !(params.shrinkage > 0.0 && params.shrinkage <= 1.0) {
        return Err(invalid("shrinkage must lie in (0, 1]"));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(invalid("targets must be finite"));
    }
    let d = features.cols();
    let total_w: f64 = weights.iter().sum();
    let base_score = snap(targets.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total_w);

    let columns: Vec<Vec<f32>> = (0..d).map(|f| features.column(f)).collect();
    let sorted: Vec<Sorted> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            let values = idx.iter().map(|&r| col[r as usize]).collect();
            Sorted { rows: idx, values }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let per_tree = if d == 0 {
        0
    } else {
        ((params.colsample * d as f64).round() as usize).clamp(1, d)
    };

    let mut pred = vec![base_score; n];
    let mut resid: Vec<f64> = targets.iter().map(|y| y - base_score).collect();
    let mse = |resid: &[f64]| resid.iter().zip(weights).map(|(r, w)| w * r * r).sum::<f64>() / total_w;
    let mut history = vec![mse(&resid)];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut grower = Grower::new(n);

    for _ in 0..params.rounds {
        let mut feats: Vec<usize> = if per_tree == d {
            (0..d).collect()
        } else {
            sample(&mut rng, d, per_tree).into_vec()
        };
        feats.sort_unstable();
        let tree = grower.grow(&columns, &sorted, &resid, weights, &feats, params);
        for r in 0..n {
            let leaf = tree.nodes[grower.node_of[r] as usize].threshold as f64;
            pred[r] += params.shrinkage * leaf;
            resid[r] = targets[r] - pred[r];
        }
        trees.push(tree);
        let loss = mse(&resid);
        debug_assert!(
            loss <= history.last().unwrap() * (1.0 + 1e-12) + 1e-300,
            "training loss increased: {} -> {loss}",
            history.last().unwrap()
        );
        history.push(loss);
    }

    Ok((
        TreeEnsemble {
            base_score,
            shrinkage: params.shrinkage,
            max_depth: params.max_depth,
            n_features: d,
            trees,
        },
        history,
    ))
}

const NONE: u32 = u32::MAX;

#[derive(Default)]
struct Acc {
    tw: f64,
    ts: f64,
    base: f64,
    ratio: f64,
    lw: f64,
    ls: f64,
    last: f32,
    seen: bool,
}

impl Acc {
    fn reset(&mut self, best_gain: Option<f64>) {
        self.ratio = self.base + best_gain.unwrap_or(0.0);
        self.lw = 0.0;
        self.ls = 0.0;
        self.seen = false;
    }
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f32,
}

/// Row order of one feature column and the values in that order.
struct Sorted {
    rows: Vec<u32>,
    values: Vec<f32>,
}

/// Per-row split-search state: active node slot, weight, weighted residual.
#[derive(Clone, Copy)]
struct RowState {
    slot: u32,
    w: f64,
    wr: f64,
}

/// Scratch state reused across rounds.
struct Grower {
    node_of: Vec<u32>,
    rows: Vec<RowState>,
}

impl Grower {
    fn new(n: usize) -> Self {
        Self {
            node_of: vec![0; n],
            rows: vec![
                RowState {
                    slot: NONE,
                    w: 0.0,
                    wr: 0.0
                };
                n
            ],
        }
    }

    fn grow(
        &mut self,
        columns: &[Vec<f32>],
        sorted: &[Sorted],
        resid: &[f64],
        weights: &[f64],
        feats: &[usize],
        params: &GbrtParams,
    ) -> Tree {
        let n = resid.len();
        self.node_of.iter_mut().for_each(|v| *v = 0);
        // per node: weight, weighted residual sum
        let mut stats: Vec<(f64, f64)> = vec![(
            weights.iter().sum(),
            resid.iter().zip(weights).map(|(r, w)| r * w).sum(),
        )];
        let mut nodes = vec![Node::leaf(0.0)];
        let mut frontier: Vec<u32> = vec![0];
        let min_leaf = params.min_samples_leaf;

        for _depth in 0..params.max_depth {
            let active: Vec<u32> = frontier
                .iter()
                .copied()
                .filter(|&id| stats[id as usize].0 >= 2.0 * min_leaf)
                .collect();
            if active.is_empty() {
                break;
            }
            let mut slot_of = vec![NONE; nodes.len()];
            for (s, &id) in active.iter().enumerate() {
                slot_of[id as usize] = s as u32;
            }
            let k = active.len();
            let mut best: Vec<Option<Best>> = vec![None; k];
            let mut acc: Vec<Acc> = active
                .iter()
                .map(|&id| {
                    let (tw, ts) = stats[id as usize];
                    Acc { tw, ts, base: ts * ts / tw, ..Acc::default() }
                })
                .collect();
            for (r, st) in self.rows.iter_mut().enumerate() {
                *st = RowState {
                    slot: slot_of[self.node_of[r] as usize],
                    w: weights[r],
                    wr: weights[r] * resid[r],
                };
            }

            for &f in feats {
                for (a, b) in acc.iter_mut().zip(&best) {
                    a.reset(b.map(|b| b.gain));
                }
                let col = &sorted[f];
                for (&r, &v) in col.rows.iter().zip(&col.values) {
                    let row = self.rows[r as usize];
                    if row.slot == NONE {
                        continue;
                    }
                    let s = row.slot as usize;
                    let a = &mut acc[s];
                    if a.seen && v > a.last {
                        let wl = a.lw;
                        let wr = a.tw - wl;
                        if wl >= min_leaf && wr >= min_leaf {
                            let sl = a.ls;
                            let sr = a.ts - sl;
                            let den = wl * wr;
                            let num = sl * sl * wr + sr * sr * wl;
                            if num > a.ratio * den {
                                a.ratio = num / den;
                                best[s] = Some(Best {
                                    gain: a.ratio - a.base,
                                    feature: f,
                                    threshold: midpoint(a.last, v),
                                });
                            }
                        }
                    }
                    a.lw += row.w;
                    a.ls += row.wr;
                    a.last = v;
                    a.seen = true;
                }
            }

            let mut next = Vec::new();
            let mut child_of = vec![(NONE, NONE); nodes.len()];
            for (s, &id) in active.iter().enumerate() {
                if let Some(b) = best[s] {
                    let l = nodes.len() as u32;
                    nodes.push(Node::leaf(0.0));
                    nodes.push(Node::leaf(0.0));
                    stats.push((0.0, 0.0));
                    stats.push((0.0, 0.0));
                    nodes[id as usize] = Node {
                        feature: b.feature as u32,
                        threshold: b.threshold,
                        left: l,
                        right: l + 1,
                    };
                    child_of[id as usize] = (l, l + 1);
                    next.push(l);
                    next.push(l + 1);
                }
            }
            if next.is_empty() {
                break;
            }
            for r in 0..n {
                let id = self.node_of[r] as usize;
                if id < child_of.len() && child_of[id].0 != NONE {
                    let node = nodes[id];
                    let c = if columns[node.feature as usize][r] <= node.threshold {
                        node.left
                    } else {
                        node.right
                    };
                    self.node_of[r] = c;
                    let st = &mut stats[c as usize];
                    st.0 += weights[r];
                    st.1 += weights[r] * resid[r];
                }
            }
            frontier = next;
        }

        for (node, &(w, s)) in nodes.iter_mut().zip(&stats) {
            if node.is_leaf() {
                *node = Node::leaf(if w > 0.0 { snap(s / w) } else { 0.0 });
            }
        }
        Tree { nodes }
    }
}

/// A single-precision threshold `t` with `a <= t < b`.
fn midpoint(a: f32, b: f32) -> f32 {
    let m = ((a as f64 + b as f64) / 2.0) as f32;
    if m >= a && m < b {
        m
    } else {
        a
    }
}
