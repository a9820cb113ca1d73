use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::snap;

/// Whether PCA removes the sample mean before the eigendecomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Centering {
    /// Eigenvectors of the covariance; the mean is stored and subtracted.
    Mean,
    /// Eigenvectors of the second-moment matrix; the stored mean is zero, so
    /// an all-zero input projects to all zeros.
    None,
}

/// Fitted PCA projection: `components` are `keep` orthonormal rows of
/// length `dim`, ordered by non-increasing variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Row-major `keep x dim`.
    pub components: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PcaBasis {
    pub fn keep(&self) -> usize {
        self.variances.len()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k * self.dim..(k + 1) * self.dim]
    }

    /// Projects `x` onto the first `keep` components.
    pub fn project(&self, x: &[f64], keep: usize) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(invalid(format!(
                "PCA basis has dimension {}, input has {}",
                self.dim,
                x.len()
            )));
        }
        if keep > self.keep() {
            return Err(invalid(format!(
                "requested {keep} components from a basis with {}",
                self.keep()
            )));
        }
        Ok((0..keep)
            .map(|k| {
                self.component(k)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum()
            })
            .collect())
    }

    /// Rounds every stored value to single precision.
    pub fn snapped(mut self) -> Self {
        self.mean.iter_mut().for_each(|v| *v = snap(*v));
        self.components.iter_mut().for_each(|v| *v = snap(*v));
        self.variances.iter_mut().for_each(|v| *v = snap(*v));
        self
    }
}

/// Sample covariance (population normalisation) or second moment of the
/// rows of `samples` (`n x dim`, row-major).
pub(crate) fn scatter(samples: &[f64], dim: usize, centering: Centering) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.len() / dim;
    let mut mean = vec![0.0; dim];
    if centering == Centering::Mean {
        for row in samples.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut centered = vec![0.0; dim];
    for row in samples.chunks_exact(dim) {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for i in 0..dim {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / n as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue, with
/// each eigenvector's largest-magnitude entry made positive.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let dim = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..dim)
        .map(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            orient(&mut v);
            (eig.eigenvalues[k].max(0.0), v)
        })
        .collect();
    // stable: equal eigenvalues keep solver order
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

pub(crate) fn orient(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits a PCA basis keeping `keep` components. Zero-variance directions are
/// allowed and keep a deterministic order.
pub fn pca_fit(samples: &[f64], dim: usize, keep: usize, centering: Centering) -> Result<PcaBasis> {
    if dim == 0 || samples.len() % dim != 0 {
        return Err(invalid("sample buffer is not a whole number of rows"));
    }
    let n = samples.len() / dim;
    if n < 2 && centering == Centering::Mean {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    if n == 0 {
        return Err(Error::InsufficientData("PCA needs at least 1 sample".into()));
    }
    if keep > dim {
        return Err(invalid(format!("cannot keep {keep} of {dim} components")));
    }
    let (mean, cov) = scatter(samples, dim, centering);
    let pairs = sorted_eigen(cov);
    let mut components = Vec::with_capacity(keep * dim);
    let mut variances = Vec::with_capacity(keep);
    for (val, vec) in pairs.into_iter().take(keep) {
        components.extend(vec);
        variances.push(val);
    }
    Ok(PcaBasis {
        dim,
        mean,
        components,
        variances,
    })
}
