//! Synthetic quality corpus: textured scenes with a bright elliptical object,
//! degraded by Gaussian blur and additive noise, scored by a monotone
//! function of the degradation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::Result;
use crate::imageio::{ColorSpace, RasterImage};
use crate::saliency::SaliencyMap;

pub const MAX_BLUR: f64 = 8.0;
pub const MAX_NOISE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    pub content_seed: u64,
    pub blur_sigma: f64,
    pub noise_std: f64,
    pub noise_seed: u64,
}

impl SynthParams {
    pub fn clean(content_seed: u64) -> Self {
        Self {
            height: 320,
            width: 320,
            content_seed,
            blur_sigma: 0.0,
            noise_std: 0.0,
            noise_seed: 0,
        }
    }
}

/// Degradation in `[0, 1]` for blur and noise within the generator's range.
pub fn degradation(blur_sigma: f64, noise_std: f64) -> f64 {
    0.65 * blur_sigma / MAX_BLUR + 0.35 * noise_std / MAX_NOISE
}

/// Score on a 1..5 scale: 5 for a pristine image, lower with degradation.
/// The jitter is scaled by the degradation so pristine images score exactly 5.
pub fn mos_for(blur_sigma: f64, noise_std: f64, jitter: f64) -> f64 {
    let d = degradation(blur_sigma, noise_std);
    (5.0 - 4.0 * d + jitter * d).clamp(1.0, 5.0)
}

struct Wave {
    freq: f64,
    cos: f64,
    sin: f64,
    phase: f64,
    amp: f64,
}

struct Scene {
    c0: [f64; 3],
    c1: [f64; 3],
    dir: (f64, f64),
    waves: Vec<Wave>,
    grain: Vec<f64>,
    centre: (f64, f64),
    axes: (f64, f64),
    angle: f64,
    object: [f64; 3],
}

fn scene(p: &SynthParams) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(p.content_seed);
    let mut colour = |lo: f64, hi: f64| -> [f64; 3] { [0, 1, 2].map(|_| rng.random_range(lo..hi)) };
    let c0 = colour(30.0, 130.0);
    let c1 = colour(30.0, 130.0);
    let object = colour(180.0, 235.0);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let waves = (0..5)
        .map(|_| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Wave {
                freq: rng.random_range(0.35..1.4),
                cos: a.cos(),
                sin: a.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp: rng.random_range(6.0..14.0),
            }
        })
        .collect();
    let grain = (0..p.height * p.width).map(|_| rng.random_range(-12.0..12.0)).collect();
    let (h, w) = (p.height as f64, p.width as f64);
    let short = h.min(w);
    Scene {
        c0,
        c1,
        dir: (theta.cos(), theta.sin()),
        waves,
        grain,
        centre: (rng.random_range(0.3 * h..0.7 * h), rng.random_range(0.3 * w..0.7 * w)),
        axes: (rng.random_range(0.12 * short..0.22 * short), rng.random_range(0.12 * short..0.22 * short)),
        angle: rng.random_range(0.0..std::f64::consts::PI),
        object,
    }
}

impl Scene {
    /// Signed ellipse coverage in `[0, 1]` with a two-pixel soft edge.
    fn object_mask(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.centre.0, x - self.centre.1);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let u = (dx * c + dy * s) / self.axes.1;
        let v = (-dx * s + dy * c) / self.axes.0;
        let r = (u * u + v * v).sqrt();
        let edge = 2.0 / self.axes.0.min(self.axes.1);
        ((1.0 - r) / edge + 0.5).clamp(0.0, 1.0)
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return plane.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * plane[y * w + (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize * w + x])
                .sum();
        }
    }
    out
}

/// Renders one scene as an 8-bit-valued RGB image plus its ground-truth
/// saliency (the blurred object mask, peak-normalised).
pub fn render(p: &SynthParams) -> Result<(RasterImage, SaliencyMap)> {
    let s = scene(p);
    let (h, w) = (p.height, p.width);
    let mut planes = vec![vec![0.0; h * w]; 3];
    let mut mask = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f64, x as f64);
            let t = ((fx * s.dir.0 + fy * s.dir.1) / (h.max(w) as f64) + 1.0) / 2.0;
            let tex: f64 = s
                .waves
                .iter()
                .map(|wv| wv.amp * (wv.freq * (fx * wv.cos + fy * wv.sin) + wv.phase).sin())
                .sum::<f64>()
                + s.grain[y * w + x];
            let m = s.object_mask(fy, fx);
            mask[y * w + x] = m;
            for c in 0..3 {
                let bg = s.c0[c] * (1.0 - t) + s.c1[c] * t + tex;
                let fg = s.object[c] + 0.8 * tex;
                planes[c][y * w + x] = bg * (1.0 - m) + fg * m;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.noise_seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, p.noise_std.max(0.0)).expect("finite noise level");
    let blurred: Vec<Vec<f64>> = planes.iter().map(|pl| gaussian_blur(pl, h, w, p.blur_sigma)).collect();
    let mut samples = Vec::with_capacity(h * w * 3);
    for i in 0..h * w {
        for pl in &blurred {
            let n = if p.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            samples.push((pl[i] + n).round().clamp(0.0, 255.0));
        }
    }
    let img = RasterImage::new(h, w, ColorSpace::Rgb, samples)?;

    let soft = gaussian_blur(&mask, h, w, 6.0);
    let peak = soft.iter().cloned().fold(0.0, f64::max);
    let sal = soft
        .iter()
        .map(|v| if peak > 0.0 { ((v / peak) * 255.0).round() / 255.0 } else { 0.0 })
        .collect();
    Ok((img, SaliencyMap::new(h, w, sal)?))
}

/// Writes `count` images, their saliency maps, `manifest.csv` and
/// `saliency_manifest.csv` into `out_dir`.
pub fn synth_generate(out_dir: impl AsRef<Path>, count: usize, seed: u64) -> Result<DatasetManifest> {
    synth_generate_sized(out_dir, count, seed, 320, 320)
}

/// Per-image parameters and score jitter drawn by the generator, in
/// manifest order.
pub fn synth_params(count: usize, seed: u64, height: usize, width: usize) -> Vec<(SynthParams, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = SynthParams {
                height,
                width,
                content_seed: rng.random(),
                blur_sigma: rng.random_range(0.0..MAX_BLUR),
                noise_std: rng.random_range(0.0..MAX_NOISE),
                noise_seed: rng.random(),
            };
            (p, rng.random_range(-0.25..0.25))
        })
        .collect()
}

pub fn synth_generate_sized(
    out_dir: impl AsRef<Path>,
    count: usize,
    seed: u64,
    height: usize,
    width: usize,
) -> Result<DatasetManifest> {
    if count == 0 {
        return Err(crate::error::invalid("synthetic corpus needs at least one image"));
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(count);
    let mut sal_rows = csv::Writer::from_path(dir.join("saliency_manifest.csv"))?;
    sal_rows.write_record(["image_path", "map_path"])?;
    for (i, (p, jitter)) in synth_params(count, seed, height, width).into_iter().enumerate() {
        let (img, sal) = render(&p)?;
        let name = format!("img_{i:04}.png");
        let map = format!("sal_{i:04}.png");
        img.save_png(dir.join(&name))?;
        sal.save_png(dir.join(&map))?;
        sal_rows.write_record([name.as_str(), map.as_str()])?;
        entries.push(ManifestEntry {
            image_path: name,
            mos: mos_for(p.blur_sigma, p.noise_std, jitter),
        });
    }
    sal_rows.flush()?;
    let manifest = DatasetManifest::new(dir, entries)?;
    manifest.write(dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_scores_highest() {
        assert_eq!(mos_for(0.0, 0.0, 0.2), 5.0);
        assert!(mos_for(0.5, 0.0, 0.25) < 5.0);
        assert!(mos_for(8.0, 25.0, -0.25) >= 1.0);
    }

    #[test]
    fn saliency_marks_the_object() {
        let p = SynthParams {
            height: 128,
            width: 128,
            ..SynthParams::clean(4)
        };
        let (_, sal) = render(&p).unwrap();
        let s = scene(&p);
        let (cy, cx) = (s.centre.0 as usize, s.centre.1 as usize);
        assert!(sal.get(cy, cx) > 0.5);
        let inside: f64 = (0..128 * 128)
            .filter(|i| s.object_mask((i / 128) as f64, (i % 128) as f64) > 0.5)
            .map(|i| sal.values()[i])
            .sum();
        assert!(inside > 0.0);
        // far from the ellipse the map is exactly zero
        let far = (0..128 * 128).find(|i| {
            let (y, x) = ((i / 128) as f64, (i % 128) as f64);
            ((y - s.centre.0).powi(2) + (x - s.centre.1).powi(2)).sqrt() > s.axes.0.max(s.axes.1) + 30.0
        });
        assert_eq!(sal.values()[far.unwrap()], 0.0);
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let flat = vec![7.0; 100];
        assert!(gaussian_blur(&flat, 10, 10, 2.0).iter().all(|v| (v - 7.0).abs() < 1e-12));
        let k = gaussian_kernel(1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rendering_is_deterministic() {
        let p = SynthParams {
            height: 64,
            width: 96,
            blur_sigma: 1.5,
            noise_std: 5.0,
            noise_seed: 3,
            ..SynthParams::clean(9)
        };
        assert_eq!(render(&p).unwrap(), render(&p).unwrap());
    }
}
