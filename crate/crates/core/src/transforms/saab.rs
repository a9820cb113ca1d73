use nalgebra::DMatrix;

use super::pca::{orient, scatter, sorted_eigen, Centering};
use super::ChannelTensor;
use crate::error::{invalid, Error, Result};
use crate::snap;

/// Fitted Saab transform: a constant DC kernel plus PCA-derived AC kernels
/// spanning the DC-orthogonal complement. The bias term is not used.
#[derive(Debug, Clone, PartialEq)]
pub struct SaabKernelSet {
    /// `[h, w]` for planar patches or `[h, w, c]` for cuboids.
    pub patch_shape: Vec<usize>,
    pub dc_kernel: Vec<f64>,
    /// Row-major `(D-1) x D`, ordered by descending energy.
    pub ac_kernels: Vec<f64>,
    pub energies: Vec<f64>,
}

impl SaabKernelSet {
    pub fn dim(&self) -> usize {
        self.dc_kernel.len()
    }

    pub fn patch_channels(&self) -> usize {
        self.patch_shape.get(2).copied().unwrap_or(1)
    }

    /// Kernel `k`, with `k = 0` the DC kernel.
    pub fn kernel(&self, k: usize) -> &[f64] {
        let d = self.dim();
        if k == 0 {
            &self.dc_kernel
        } else {
            &self.ac_kernels[(k - 1) * d..k * d]
        }
    }

    /// Projects one vectorised patch onto all `D` kernels.
    pub fn transform(&self, patch: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.transform_into(patch, &mut out);
        out
    }

    fn transform_into(&self, patch: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = dot(self.kernel(k), patch);
        }
    }

    /// Reconstructs a patch from its `D` coefficients.
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (k, &c) in coeffs.iter().enumerate().take(d) {
            for (o, w) in out.iter_mut().zip(self.kernel(k)) {
                *o += c * w;
            }
        }
        out
    }

    pub fn snapped(mut self) -> Self {
        self.dc_kernel.iter_mut().for_each(|v| *v = snap(*v));
        self.ac_kernels.iter_mut().for_each(|v| *v = snap(*v));
        self.energies.iter_mut().for_each(|v| *v = snap(*v));
        self
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Orthonormal basis of the complement of the constant direction: columns
/// 1.. of the Householder reflector that maps `e1` onto the DC kernel.
fn dc_complement(d: usize) -> DMatrix<f64> {
    let dc = (1.0 / d as f64).sqrt();
    let mut w = vec![-dc; d];
    w[0] += 1.0;
    let norm2: f64 = w.iter().map(|v| v * v).sum();
    let mut q = DMatrix::<f64>::zeros(d, d - 1);
    for col in 1..d {
        for row in 0..d {
            let id = if row == col { 1.0 } else { 0.0 };
            let h = if norm2 > 0.0 { id - 2.0 * w[row] * w[col] / norm2 } else { id };
            q[(row, col - 1)] = h;
        }
    }
    q
}

/// Fits Saab kernels on vectorised patches (`n x D`, row-major).
pub fn saab_fit(patches: &[f64], patch_shape: &[usize]) -> Result<SaabKernelSet> {
    if !(2..=3).contains(&patch_shape.len()) || patch_shape.contains(&0) {
        return Err(invalid(format!("bad Saab patch shape {patch_shape:?}")));
    }
    let d: usize = patch_shape.iter().product();
    if d < 2 {
        return Err(invalid("Saab patches need at least two entries"));
    }
    if patches.len() % d != 0 {
        return Err(invalid("patch buffer is not a whole number of patches"));
    }
    let n = patches.len() / d;
    if n < d {
        return Err(Error::InsufficientData(format!(
            "Saab fit on {d}-dimensional patches needs at least {d} patches, got {n}"
        )));
    }
    let residuals: Vec<f64> = patches
        .chunks_exact(d)
        .flat_map(|p| {
            let m = p.iter().sum::<f64>() / d as f64;
            p.iter().map(move |v| v - m)
        })
        .collect();
    let (_, cov) = scatter(&residuals, d, Centering::Mean);
    let q = dc_complement(d);
    let reduced = q.transpose() * &cov * &q;
    let pairs = sorted_eigen(reduced);

    let mut ac_kernels = Vec::with_capacity((d - 1) * d);
    let mut energies = Vec::with_capacity(d - 1);
    for (val, v) in pairs {
        let v = nalgebra::DVector::from_vec(v);
        let mut k: Vec<f64> = (&q * v).iter().copied().collect();
        orient(&mut k);
        ac_kernels.extend(k);
        energies.push(val);
    }
    Ok(SaabKernelSet {
        patch_shape: patch_shape.to_vec(),
        dc_kernel: vec![(1.0 / d as f64).sqrt(); d],
        ac_kernels,
        energies,
    })
}

/// Cuts `input` into `h x w (x c)` patches at the given stride, padding the
/// bottom/right by replication so the output grid is `ceil(H / stride) x
/// ceil(W / stride)`. Patches are vectorised as `(y, x, channel)` with the
/// channel varying fastest.
pub fn extract_patches(
    input: &ChannelTensor,
    patch_shape: &[usize],
    stride: usize,
) -> Result<(Vec<f64>, usize, usize)> {
    let (ph, pw) = (patch_shape[0], patch_shape[1]);
    let pc = patch_shape.get(2).copied().unwrap_or(1);
    if input.channels() != pc {
        return Err(invalid(format!(
            "patch shape {patch_shape:?} needs {pc} input channels, got {}",
            input.channels()
        )));
    }
    if stride == 0 {
        return Err(invalid("stride must be positive"));
    }
    let oh = input.height().div_ceil(stride);
    let ow = input.width().div_ceil(stride);
    let padded = input.pad_to((oh - 1) * stride + ph, (ow - 1) * stride + pw);
    let d = ph * pw * pc;
    let mut out = Vec::with_capacity(oh * ow * d);
    for oy in 0..oh {
        for ox in 0..ow {
            for dy in 0..ph {
                for dx in 0..pw {
                    for c in 0..pc {
                        out.push(padded.get(c, oy * stride + dy, ox * stride + dx));
                    }
                }
            }
        }
    }
    Ok((out, oh, ow))
}

/// Applies fitted kernels to every patch of `input`. Output channel 0 is DC,
/// channels 1.. are AC in kernel order.
pub fn saab_apply(kernels: &SaabKernelSet, input: &ChannelTensor, block_stride: usize) -> Result<ChannelTensor> {
    let (patches, oh, ow) = extract_patches(input, &kernels.patch_shape, block_stride)?;
    let d = kernels.dim();
    let mut out = ChannelTensor::zeros(d, oh, ow);
    let mut coeffs = vec![0.0; d];
    let plane = oh * ow;
    let mut by_input = vec![0.0; d * d];
    for k in 0..d {
        for (j, &w) in kernels.kernel(k).iter().enumerate() {
            by_input[j * d + k] = w;
        }
    }
    for (i, p) in patches.chunks_exact(d).enumerate() {
        coeffs.fill(0.0);
        for (&x, col) in p.iter().zip(by_input.chunks_exact(d)) {
            for (o, &w) in coeffs.iter_mut().zip(col) {
                *o += x * w;
            }
        }
        for (k, &c) in coeffs.iter().enumerate() {
            out.plane_mut(k)[i] = c;
        }
    }
    debug_assert_eq!(patches.len() / d, plane);
    Ok(out)
}
