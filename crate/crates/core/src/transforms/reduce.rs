use super::pca::{pca_fit, Centering, PcaBasis};
use super::ChannelTensor;
use crate::error::{invalid, Result};

/// 2x2 non-overlapping max pooling per channel; odd sizes are padded by
/// replication.
pub fn max_pool2(input: &ChannelTensor) -> ChannelTensor {
    let (oh, ow) = (input.height().div_ceil(2), input.width().div_ceil(2));
    let padded = input.pad_to(oh * 2, ow * 2);
    let w = padded.width();
    let mut out = ChannelTensor::zeros(input.channels(), oh, ow);
    for c in 0..input.channels() {
        let src = padded.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..oh {
            for x in 0..ow {
                let i = 2 * y * w + 2 * x;
                dst[y * ow + x] = src[i].max(src[i + 1]).max(src[i + w]).max(src[i + w + 1]);
            }
        }
    }
    out
}

/// Population standard deviation of each channel over its spatial extent.
/// A channel whose values are all identical reports exactly zero.
pub fn channel_std(input: &ChannelTensor) -> Vec<f64> {
    (0..input.channels())
        .map(|c| {
            let p = input.plane(c);
            if p.iter().all(|&v| v == p[0]) {
                return 0.0;
            }
            let n = p.len() as f64;
            let mean = p.iter().sum::<f64>() / n;
            (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Cuts channel `c` into `rh x rw` regions (after replication padding) and
/// returns them vectorised row-major, regions in row-major order.
pub fn region_vectors(input: &ChannelTensor, c: usize, region: (usize, usize)) -> Vec<f64> {
    let (rh, rw) = region;
    let (gh, gw) = (input.height().div_ceil(rh), input.width().div_ceil(rw));
    let padded = input.pad_to(gh * rh, gw * rw);
    let mut out = Vec::with_capacity(gh * gw * rh * rw);
    for gy in 0..gh {
        for gx in 0..gw {
            for dy in 0..rh {
                for dx in 0..rw {
                    out.push(padded.get(c, gy * rh + dy, gx * rw + dx));
                }
            }
        }
    }
    out
}

/// Where region PCA bases come from.
#[derive(Debug, Clone, Copy)]
pub enum RegionBasis<'a> {
    /// One basis per channel, or a single basis shared by all channels.
    Fitted(&'a [PcaBasis]),
    /// Fit a basis per channel on that channel's own regions.
    OnTheFly(Centering),
}

/// Projects every region of every channel onto the top `keep` components and
/// concatenates the projections (channel, then region, then component).
pub fn region_pca_reduce(
    input: &ChannelTensor,
    region: (usize, usize),
    basis: RegionBasis<'_>,
    keep: usize,
) -> Result<Vec<f64>> {
    if region.0 == 0 || region.1 == 0 {
        return Err(invalid("region dimensions must be positive"));
    }
    let d = region.0 * region.1;
    let mut out = Vec::new();
    for c in 0..input.channels() {
        let vecs = region_vectors(input, c, region);
        let owned;
        let b = match basis {
            RegionBasis::Fitted(bases) => match bases.len() {
                0 => return Err(invalid("no PCA bases supplied")),
                1 => &bases[0],
                n if n == input.channels() => &bases[c],
                n => {
                    return Err(invalid(format!(
                        "{n} PCA bases for {} channels",
                        input.channels()
                    )))
                }
            },
            RegionBasis::OnTheFly(centering) => {
                owned = pca_fit(&vecs, d, keep.min(d), centering)?;
                &owned
            }
        };
        if b.dim != d {
            return Err(invalid(format!(
                "PCA basis dimension {} does not match {}x{} regions",
                b.dim, region.0, region.1
            )));
        }
        for v in vecs.chunks_exact(d) {
            out.extend(b.project(v, keep)?);
        }
    }
    Ok(out)
}
