//! Numerical primitives: block DCT with zigzag ordering, PCA, 2-D and 3-D
//! Saab transforms, max pooling and the two aggregation reducers.

mod dct;
mod pca;
mod reduce;
mod saab;

pub use dct::{block_dct_zigzag, dct8x8, idct8x8, ZIGZAG};
pub use pca::{pca_fit, Centering, PcaBasis};
pub use reduce::{channel_std, max_pool2, region_pca_reduce, region_vectors, RegionBasis};
pub use saab::{extract_patches, saab_apply, saab_fit, SaabKernelSet};

use crate::error::{invalid, Result};
use crate::imageio::bilinear_plane;

/// Stack of equally sized real planes, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl ChannelTensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(invalid(format!(
                "tensor of {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn from_plane(plane: Vec<f64>, height: usize, width: usize) -> Result<Self> {
        Self::from_vec(1, height, width, plane)
    }

    /// Stacks planes from interleaved samples (e.g. an RGB raster).
    pub fn from_interleaved(samples: &[f64], channels: usize, height: usize, width: usize) -> Result<Self> {
        if samples.len() != channels * height * width {
            return Err(invalid("interleaved sample count mismatch"));
        }
        let mut values = Vec::with_capacity(samples.len());
        for c in 0..channels {
            values.extend(samples.iter().skip(c).step_by(channels));
        }
        Self::from_vec(channels, height, width, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.values[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Channels `range` as a new tensor.
    pub fn select(&self, range: std::ops::Range<usize>) -> Result<ChannelTensor> {
        if range.end > self.channels || range.start > range.end {
            return Err(invalid(format!(
                "channel range {range:?} outside {} channels",
                self.channels
            )));
        }
        let n = self.height * self.width;
        Ok(ChannelTensor {
            channels: range.len(),
            height: self.height,
            width: self.width,
            values: self.values[range.start * n..range.end * n].to_vec(),
        })
    }

    /// Concatenates tensors of equal spatial size along the channel axis.
    pub fn concat(parts: &[ChannelTensor]) -> Result<ChannelTensor> {
        let first = parts.first().ok_or_else(|| invalid("nothing to concatenate"))?;
        let (h, w) = (first.height, first.width);
        let mut values = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.height, p.width) != (h, w) {
                return Err(invalid("concatenated tensors differ in spatial size"));
            }
            values.extend_from_slice(&p.values);
            channels += p.channels;
        }
        Self::from_vec(channels, h, w, values)
    }

    /// Pads bottom/right by edge replication up to at least `(h, w)`.
    pub fn pad_to(&self, h: usize, w: usize) -> ChannelTensor {
        if h <= self.height && w <= self.width {
            return self.clone();
        }
        let (h, w) = (h.max(self.height), w.max(self.width));
        let mut values = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for y in 0..h {
                let sy = y.min(self.height - 1);
                for x in 0..w {
                    values.push(self.get(c, sy, x.min(self.width - 1)));
                }
            }
        }
        ChannelTensor {
            channels: self.channels,
            height: h,
            width: w,
            values,
        }
    }

    pub fn resize_bilinear(&self, h: usize, w: usize) -> ChannelTensor {
        let mut values = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            values.extend(bilinear_plane(self.plane(c), self.height, self.width, h, w));
        }
        ChannelTensor {
            channels: self.channels,
            height: h,
            width: w,
            values,
        }
    }

    /// Area (box-overlap) resampling of the full extent to `(h, w)`.
    pub fn resize_area(&self, h: usize, w: usize) -> ChannelTensor {
        self.area_window(0.0, 0.0, self.height as f64, self.width as f64, h, w)
    }

    /// Area resampling of a fractional window `[y0, y0+wh) x [x0, x0+ww)`
    /// (in cell units) to an `(h, w)` grid. Cells partially covered by an
    /// output bin contribute in proportion to the overlap.
    pub fn area_window(&self, y0: f64, x0: f64, wh: f64, ww: f64, h: usize, w: usize) -> ChannelTensor {
        let ys = overlap_weights(y0, wh, h, self.height);
        let xs = overlap_weights(x0, ww, w, self.width);
        let mut values = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for wy in &ys {
                for wx in &xs {
                    let mut acc = 0.0;
                    let mut norm = 0.0;
                    for &(iy, fy) in wy {
                        for &(ix, fx) in wx {
                            acc += plane[iy * self.width + ix] * fy * fx;
                            norm += fy * fx;
                        }
                    }
                    values.push(if norm > 0.0 { acc / norm } else { 0.0 });
                }
            }
        }
        ChannelTensor {
            channels: self.channels,
            height: h,
            width: w,
            values,
        }
    }
}

/// For each of `bins` output bins over `[start, start+len)`, the source cells
/// it overlaps and the overlap length. Cells past the edge clamp to the last.
fn overlap_weights(start: f64, len: f64, bins: usize, n: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len / bins as f64;
    (0..bins)
        .map(|b| {
            let lo = start + b as f64 * step;
            let hi = lo + step;
            let mut cells = Vec::new();
            let mut i = lo.floor().max(0.0) as usize;
            while (i as f64) < hi {
                let overlap = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                if overlap > 1e-12 {
                    cells.push((i.min(n - 1), overlap));
                }
                i += 1;
            }
            if cells.is_empty() {
                cells.push(((lo.floor().max(0.0) as usize).min(n - 1), 1.0));
            }
            cells
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_resize_of_integer_factor_is_block_mean() {
        let t = ChannelTensor::from_vec(1, 2, 4, vec![0.0, 2.0, 4.0, 6.0, 2.0, 4.0, 6.0, 8.0]).unwrap();
        let r = t.resize_area(1, 2);
        assert_eq!(r.values(), &[2.0, 6.0]);
    }

    #[test]
    fn area_resize_preserves_constants() {
        let t = ChannelTensor::from_vec(2, 5, 5, [vec![3.0; 25], vec![-1.5; 25]].concat()).unwrap();
        let r = t.resize_area(4, 4);
        assert!(r.plane(0).iter().all(|&v| (v - 3.0).abs() < 1e-12));
        assert!(r.plane(1).iter().all(|&v| (v + 1.5).abs() < 1e-12));
    }

    #[test]
    fn pad_replicates_edges() {
        let t = ChannelTensor::from_vec(1, 1, 2, vec![1.0, 2.0]).unwrap();
        let p = t.pad_to(2, 3);
        assert_eq!(p.values(), &[1.0, 2.0, 2.0, 1.0, 2.0, 2.0]);
    }
}
