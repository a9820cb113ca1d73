//! Fixtures shared by the benchmarks: small fitted models trained on the
//! synthetic corpus.

use std::path::Path;

use gsbiqa::eval::{render, synth_generate, SynthParams};
use gsbiqa::quality::train_pipeline;
use gsbiqa::saliency::saliency_train;
use gsbiqa::{QualityConfig, QualityModel, RasterImage, Result, SaliencyConfig, SaliencyModel};

/// A saliency detector fitted on `count` clean synthetic scenes.
pub fn saliency_fixture(count: u64) -> Result<SaliencyModel> {
    let (images, maps): (Vec<_>, Vec<_>) = (0..count)
        .map(|i| render(&SynthParams::clean(500 + i)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    saliency_train(&images, &maps, &SaliencyConfig::default())
}

/// A quality model under the default configuration, trained on `count`
/// synthetic images written to `dir`.
pub fn quality_fixture(dir: &Path, count: usize) -> Result<QualityModel> {
    let saliency = saliency_fixture(8)?;
    let manifest = synth_generate(dir, count, 11)?;
    train_pipeline(&manifest, None, &saliency, &QualityConfig::default())
}

/// A degraded synthetic scene to score.
pub fn probe_image() -> Result<RasterImage> {
    let p = SynthParams {
        blur_sigma: 2.0,
        noise_std: 8.0,
        noise_seed: 3,
        ..SynthParams::clean(77)
    };
    Ok(render(&p)?.0)
}
