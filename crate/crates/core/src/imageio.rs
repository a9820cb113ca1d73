//! Image decoding, colour conversion, block-mean pyramids and crop grids.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    Yuv,
    Gray,
}

/// Real-valued raster, row-major with interleaved channels.
///
/// Samples lie in `[0, 255]`. The one exception is YUV chroma, which reaches
/// 255.5 for fully saturated blue or red under the full-range matrix; it is
/// left unclamped so the colour round trip stays exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    colorspace: ColorSpace,
    samples: Vec<f64>,
}

const YUV_CHROMA_MAX: f64 = 255.5;

impl RasterImage {
    pub fn new(
        height: usize,
        width: usize,
        colorspace: ColorSpace,
        samples: Vec<f64>,
    ) -> Result<Self> {
        let channels = match colorspace {
            ColorSpace::Gray => 1,
            ColorSpace::Rgb | ColorSpace::Yuv => 3,
        };
        if height == 0 || width == 0 {
            return Err(invalid("image must have non-zero dimensions"));
        }
        if samples.len() != height * width * channels {
            return Err(invalid(format!(
                "expected {} samples for {height}x{width}x{channels}, got {}",
                height * width * channels,
                samples.len()
            )));
        }
        let hi = if colorspace == ColorSpace::Yuv {
            YUV_CHROMA_MAX
        } else {
            255.0
        };
        if let Some(bad) = samples
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > hi)
        {
            return Err(invalid(format!("sample {bad} outside [0, {hi}]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            colorspace,
            samples,
        })
    }

    /// A single-valued image; handy for tests and padding.
    pub fn filled(height: usize, width: usize, colorspace: ColorSpace, value: f64) -> Result<Self> {
        let channels = if colorspace == ColorSpace::Gray { 1 } else { 3 };
        Self::new(
            height,
            width,
            colorspace,
            vec![value; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.samples[(y * self.width + x) * self.channels + c]
    }

    /// Copies one channel out as a row-major plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.samples
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Luminance plane: Y for YUV, the only plane for grey, BT.601 Y for RGB.
    pub fn luma(&self) -> Vec<f64> {
        match self.colorspace {
            ColorSpace::Gray | ColorSpace::Yuv => self.plane(0),
            ColorSpace::Rgb => self
                .samples
                .chunks_exact(3)
                .map(|p| {
                    let m = &forward_matrix();
                    m[(0, 0)] * p[0] + m[(0, 1)] * p[1] + m[(0, 2)] * p[2]
                })
                .collect(),
        }
    }

    /// Returns an RGB view: grey is replicated, YUV converted, RGB cloned.
    pub fn to_rgb(&self) -> RasterImage {
        match self.colorspace {
            ColorSpace::Rgb => self.clone(),
            ColorSpace::Yuv => convert(self, ColorSpace::Rgb),
            ColorSpace::Gray => {
                let samples = self.samples.iter().flat_map(|&v| [v, v, v]).collect();
                RasterImage {
                    height: self.height,
                    width: self.width,
                    channels: 3,
                    colorspace: ColorSpace::Rgb,
                    samples,
                }
            }
        }
    }

    pub fn crop(&self, crop: &CropCandidate) -> Result<RasterImage> {
        if crop.row_offset + crop.size > self.height || crop.col_offset + crop.size > self.width {
            return Err(invalid(format!(
                "crop {crop:?} outside {}x{} image",
                self.height, self.width
            )));
        }
        let mut samples = Vec::with_capacity(crop.size * crop.size * self.channels);
        for y in crop.row_offset..crop.row_offset + crop.size {
            let start = (y * self.width + crop.col_offset) * self.channels;
            samples.extend_from_slice(&self.samples[start..start + crop.size * self.channels]);
        }
        Ok(RasterImage {
            height: crop.size,
            width: crop.size,
            channels: self.channels,
            colorspace: self.colorspace,
            samples,
        })
    }

    /// Bilinear resize with pixel-centre alignment.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<RasterImage> {
        if height == 0 || width == 0 {
            return Err(invalid("resize target must be non-zero"));
        }
        let mut out = vec![0.0; height * width * self.channels];
        for c in 0..self.channels {
            let plane = self.plane(c);
            let resized = bilinear_plane(&plane, self.height, self.width, height, width);
            for (i, v) in resized.into_iter().enumerate() {
                out[i * self.channels + c] = v.clamp(0.0, 255.0);
            }
        }
        RasterImage::new(height, width, self.colorspace, out)
    }

    /// Upscales so the shorter side is at least `min_side`, keeping aspect.
    pub fn ensure_min_side(&self, min_side: usize) -> Result<RasterImage> {
        let short = self.height.min(self.width);
        if short >= min_side {
            return Ok(self.clone());
        }
        let scale = min_side as f64 / short as f64;
        let h = ((self.height as f64 * scale).round() as usize).max(min_side);
        let w = ((self.width as f64 * scale).round() as usize).max(min_side);
        self.resize_bilinear(h, w)
    }

    pub fn from_dynamic(img: &image::DynamicImage) -> Result<RasterImage> {
        use image::ColorType;
        match img.color() {
            ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16 => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                let samples = g.into_raw().into_iter().map(f64::from).collect();
                RasterImage::new(h as usize, w as usize, ColorSpace::Gray, samples)
            }
            _ => {
                let rgb = img.to_rgb8();
                let (w, h) = rgb.dimensions();
                let samples = rgb.into_raw().into_iter().map(f64::from).collect();
                RasterImage::new(h as usize, w as usize, ColorSpace::Rgb, samples)
            }
        }
    }

    /// Decodes a PNG or JPEG file.
    pub fn load(path: impl AsRef<Path>) -> Result<RasterImage> {
        let path = path.as_ref();
        let reader = image::ImageReader::open(path)?
            .with_guessed_format()
            .map_err(Error::Io)?;
        match reader.format() {
            Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
            other => {
                return Err(invalid(format!(
                    "{}: unsupported image format {other:?}",
                    path.display()
                )))
            }
        }
        let img = reader.decode().map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_dynamic(&img)
    }

    /// Writes an 8-bit PNG, rounding samples. YUV images are converted first.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let img = match self.colorspace {
            ColorSpace::Yuv => self.to_rgb(),
            _ => self.clone(),
        };
        let bytes: Vec<u8> = img
            .samples
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        let (w, h) = (img.width as u32, img.height as u32);
        match img.colorspace {
            ColorSpace::Gray => image::GrayImage::from_raw(w, h, bytes)
                .expect("buffer sized from dimensions")
                .save(path)?,
            _ => image::RgbImage::from_raw(w, h, bytes)
                .expect("buffer sized from dimensions")
                .save(path)?,
        }
        Ok(())
    }
}

/// BT.601 full-range RGB -> YUV matrix (chroma offset 128 applied separately).
fn forward_matrix() -> &'static Matrix3<f64> {
    static M: OnceLock<Matrix3<f64>> = OnceLock::new();
    M.get_or_init(|| {
        Matrix3::new(
            0.299, 0.587, 0.114, //
            -0.168736, -0.331264, 0.5, //
            0.5, -0.418688, -0.081312,
        )
    })
}

fn inverse_matrix() -> &'static Matrix3<f64> {
    static M: OnceLock<Matrix3<f64>> = OnceLock::new();
    M.get_or_init(|| {
        forward_matrix()
            .try_inverse()
            .expect("BT.601 matrix is invertible")
    })
}

fn convert(img: &RasterImage, target: ColorSpace) -> RasterImage {
    let (m, pre, post) = match target {
        ColorSpace::Yuv => (forward_matrix(), [0.0, 0.0, 0.0], [0.0, 128.0, 128.0]),
        _ => (inverse_matrix(), [0.0, -128.0, -128.0], [0.0, 0.0, 0.0]),
    };
    let hi = if target == ColorSpace::Yuv {
        YUV_CHROMA_MAX
    } else {
        255.0
    };
    let rows: [[f64; 3]; 3] = std::array::from_fn(|r| [m[(r, 0)], m[(r, 1)], m[(r, 2)]]);
    let mut samples = vec![0.0; img.samples.len()];
    for (o, p) in samples.chunks_exact_mut(3).zip(img.samples.chunks_exact(3)) {
        let a = p[0] + pre[0];
        let b = p[1] + pre[1];
        let c = p[2] + pre[2];
        for r in 0..3 {
            o[r] = (rows[r][0] * a + rows[r][1] * b + rows[r][2] * c + post[r]).clamp(0.0, hi);
        }
    }
    RasterImage {
        height: img.height,
        width: img.width,
        channels: 3,
        colorspace: target,
        samples,
    }
}

/// Converts between RGB and YUV (BT.601 full range, chroma centred at 128).
pub fn rgb_yuv_convert(img: &RasterImage, target: ColorSpace) -> Result<RasterImage> {
    if img.channels != 3 || img.colorspace == ColorSpace::Gray {
        return Err(invalid("colour conversion needs a 3-channel RGB or YUV image"));
    }
    if target == ColorSpace::Gray {
        return Err(invalid("conversion target must be RGB or YUV"));
    }
    if img.colorspace == target {
        return Ok(img.clone());
    }
    Ok(convert(img, target))
}

/// Block-mean downsampling. Dimensions that are not a multiple of `factor`
/// are padded by edge replication first, so the output is `ceil(dim / factor)`.
pub fn downsample(img: &RasterImage, factor: usize) -> Result<RasterImage> {
    if factor == 0 {
        return Err(invalid("downsample factor must be positive"));
    }
    let (oh, ow) = (img.height.div_ceil(factor), img.width.div_ceil(factor));
    let mut out = vec![0.0; oh * ow * img.channels];
    for c in 0..img.channels {
        let plane = img.plane(c);
        let (small, _, _) = downsample_plane(&plane, img.height, img.width, factor);
        for (i, v) in small.into_iter().enumerate() {
            out[i * img.channels + c] = v;
        }
    }
    Ok(RasterImage {
        height: oh,
        width: ow,
        channels: img.channels,
        colorspace: img.colorspace,
        samples: out,
    })
}

/// Plane version of [`downsample`]; returns the plane and its new dimensions.
pub fn downsample_plane(
    plane: &[f64],
    h: usize,
    w: usize,
    factor: usize,
) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for by in 0..oh {
        for bx in 0..ow {
            let mut sum = 0.0;
            for dy in 0..factor {
                let y = (by * factor + dy).min(h - 1);
                for dx in 0..factor {
                    let x = (bx * factor + dx).min(w - 1);
                    sum += plane[y * w + x];
                }
            }
            out.push(sum * norm);
        }
    }
    (out, oh, ow)
}

/// Bilinear resampling of a plane with pixel-centre alignment and edge clamp.
pub fn bilinear_plane(plane: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let ys = axis(h, oh);
    let xs = axis(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Square crop window in source-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropCandidate {
    pub row_offset: usize,
    pub col_offset: usize,
    pub size: usize,
}

fn axis_offsets(len: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut offsets: Vec<usize> = (0..).map(|i| i * stride).take_while(|o| o + size <= len).collect();
    let last = len - size;
    if offsets.last() != Some(&last) {
        offsets.push(last);
    }
    offsets
}

/// Uniform grid of `size`-square windows with the given stride. The
/// bottom/right-aligned positions are always included so the windows cover
/// the image. Ordering is row-major.
pub fn crop_candidates(img: &RasterImage, size: usize, stride: usize) -> Result<Vec<CropCandidate>> {
    crop_grid(img.height, img.width, size, stride)
}

pub fn crop_grid(height: usize, width: usize, size: usize, stride: usize) -> Result<Vec<CropCandidate>> {
    if size == 0 || stride == 0 {
        return Err(invalid("crop size and stride must be positive"));
    }
    if size > height || size > width {
        return Err(invalid(format!(
            "crop size {size} exceeds {height}x{width} image; upscale first"
        )));
    }
    let rows = axis_offsets(height, size, stride);
    let cols = axis_offsets(width, size, stride);
    Ok(rows
        .iter()
        .flat_map(|&r| {
            cols.iter().map(move |&c| CropCandidate {
                row_offset: r,
                col_offset: c,
                size,
            })
        })
        .collect())
}
