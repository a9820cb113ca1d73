//! Correlation metrics.

use crate::error::{invalid, Error, Result};

fn check(pred: &[f64], subj: &[f64]) -> Result<()> {
    if pred.len() != subj.len() {
        return Err(invalid(format!(
            "{} predictions against {} subjective scores",
            pred.len(),
            subj.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedMetric("correlation needs at least two samples".into()));
    }
    if pred.iter().chain(subj).any(|v| !v.is_finite()) {
        return Err(invalid("scores must be finite"));
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
pub fn plcc(pred: &[f64], subj: &[f64]) -> Result<f64> {
    check(pred, subj)?;
    let n = pred.len() as f64;
    let pm = pred.iter().sum::<f64>() / n;
    let sm = subj.iter().sum::<f64>() / n;
    let (mut num, mut pp, mut ss) = (0.0, 0.0, 0.0);
    for (p, s) in pred.iter().zip(subj) {
        num += (p - pm) * (s - sm);
        pp += (p - pm) * (p - pm);
        ss += (s - sm) * (s - sm);
    }
    if pp == 0.0 || ss == 0.0 {
        return Err(Error::UndefinedMetric("PLCC is undefined for a zero-variance input".into()));
    }
    Ok((num / (pp.sqrt() * ss.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn has_ties(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.windows(2).any(|w| w[0] == w[1])
}

/// Spearman rank-order correlation. Without ties this is the closed form
/// `1 - 6 sum d^2 / (L (L^2 - 1))`; with ties it is PLCC of average ranks.
pub fn srocc(pred: &[f64], subj: &[f64]) -> Result<f64> {
    check(pred, subj)?;
    let all_equal = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if all_equal(pred) || all_equal(subj) {
        return Err(Error::UndefinedMetric("SROCC is undefined for an all-equal input".into()));
    }
    let (rp, rs) = (average_ranks(pred), average_ranks(subj));
    if has_ties(pred) || has_ties(subj) {
        return plcc(&rp, &rs);
    }
    let l = pred.len() as f64;
    let d2: f64 = rp.iter().zip(&rs).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - 6.0 * d2 / (l * (l * l - 1.0)))
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}
