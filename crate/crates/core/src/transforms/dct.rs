use std::f64::consts::PI;
use std::sync::OnceLock;

use super::ChannelTensor;
use crate::error::{invalid, Result};

/// JPEG zigzag scan: entry `k` is the raster index (`row * 8 + col`) of the
/// `k`-th coefficient.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, //
    17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, //
    27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, //
    29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, //
    53, 60, 61, 54, 47, 55, 62, 63,
];

/// Orthonormal DCT-II basis, `basis[u][x]`.
fn basis() -> &'static [[f64; 8]; 8] {
    static B: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// 2-D orthonormal DCT-II of a raster-ordered 8x8 block (output raster order).
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += c[u][x] * block[y * 8 + x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    let mut out = [0.0; 64];
    // columns
    for v in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += c[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

/// Inverse of [`dct8x8`].
pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let c = basis();
    let mut tmp = [0.0; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += c[u][x] * coeffs[v * 8 + u];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += c[v][y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

/// Block DCT over non-overlapping 8x8 blocks of a single-channel tensor.
/// Output channel `k` holds the `k`-th zigzag coefficient of every block; the
/// input is padded by replication to a multiple of 8.
pub fn block_dct_zigzag(plane: &ChannelTensor) -> Result<ChannelTensor> {
    if plane.channels() != 1 {
        return Err(invalid(format!(
            "block DCT expects one channel, got {}",
            plane.channels()
        )));
    }
    let padded = plane.pad_to(plane.height().div_ceil(8) * 8, plane.width().div_ceil(8) * 8);
    let (bh, bw) = (padded.height() / 8, padded.width() / 8);
    let mut out = ChannelTensor::zeros(64, bh, bw);
    let src = padded.plane(0);
    let w = padded.width();
    let mut block = [0.0; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for y in 0..8 {
                let row = (by * 8 + y) * w + bx * 8;
                block[y * 8..y * 8 + 8].copy_from_slice(&src[row..row + 8]);
            }
            let coeffs = dct8x8(&block);
            for (k, &idx) in ZIGZAG.iter().enumerate() {
                out.plane_mut(k)[by * bw + bx] = coeffs[idx];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zigzag_prefix() {
        let rc: Vec<(usize, usize)> = ZIGZAG[..6].iter().map(|&i| (i / 8, i % 8)).collect();
        assert_eq!(rc, vec![(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]);
        let mut seen = ZIGZAG.to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn constant_block() {
        let c = 37.25;
        let t = ChannelTensor::from_plane(vec![c; 64], 8, 8).unwrap();
        let d = block_dct_zigzag(&t).unwrap();
        assert_eq!((d.channels(), d.height(), d.width()), (64, 1, 1));
        assert!((d.get(0, 0, 0) - 8.0 * c).abs() < 1e-9);
        for k in 1..64 {
            assert!(d.get(k, 0, 0).abs() < 1e-9);
        }
    }

    #[test]
    fn dct_matches_direct_double_sum() {
        let block: [f64; 64] = std::array::from_fn(|i| ((i * 37) % 17) as f64 - 3.0);
        let fast = dct8x8(&block);
        for v in 0..8 {
            for u in 0..8 {
                let a = |k: usize| if k == 0 { (0.125f64).sqrt() } else { 0.5 };
                let mut s = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        s += block[y * 8 + x]
                            * (((2 * x + 1) * u) as f64 * PI / 16.0).cos()
                            * (((2 * y + 1) * v) as f64 * PI / 16.0).cos();
                    }
                }
                assert!((fast[v * 8 + u] - a(u) * a(v) * s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pads_to_multiple_of_eight() {
        let t = ChannelTensor::from_plane(vec![1.0; 10 * 12], 10, 12).unwrap();
        let d = block_dct_zigzag(&t).unwrap();
        assert_eq!((d.height(), d.width()), (2, 2));
        assert!(block_dct_zigzag(&ChannelTensor::zeros(2, 8, 8)).is_err());
    }
}
