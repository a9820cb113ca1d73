use gsbiqa::eval::{render, SynthParams};
use gsbiqa::imageio::crop_grid;
use gsbiqa::saliency::{saliency_predict, saliency_train, select_top_crops};
use gsbiqa::{plcc, ColorSpace, RasterImage, SaliencyConfig, SaliencyMap, SaliencyModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus(n: u64) -> (Vec<RasterImage>, Vec<SaliencyMap>) {
    (0..n)
        .map(|i| {
            let p = SynthParams {
                height: 192,
                width: 192,
                ..SynthParams::clean(40 + i)
            };
            render(&p).unwrap()
        })
        .unzip()
}

fn config() -> SaliencyConfig {
    let mut cfg = SaliencyConfig::default();
    cfg.gbrt.rounds = 80;
    cfg
}

#[test]
fn constant_targets_are_learned() {
    let (images, _) = corpus(3);
    let maps: Vec<SaliencyMap> = images.iter().map(|im| SaliencyMap::uniform(im.height(), im.width(), 0.5).unwrap()).collect();
    let model = saliency_train(&images, &maps, &config()).unwrap();
    for im in &images {
        let pred = saliency_predict(&model, im).unwrap();
        assert!(pred.values().iter().all(|v| (v - 0.5).abs() <= 0.05));
    }
}

#[test]
fn bright_objects_are_found_on_the_training_set() {
    let (images, maps) = corpus(8);
    let model = saliency_train(&images, &maps, &config()).unwrap();
    let (mut pred, mut gt) = (Vec::new(), Vec::new());
    for (im, m) in images.iter().zip(&maps) {
        let p = saliency_predict(&model, im).unwrap();
        assert_eq!((p.height(), p.width()), (im.height(), im.width()));
        assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
        pred.extend_from_slice(p.values());
        gt.extend_from_slice(m.values());
    }
    let r = plcc(&pred, &gt).unwrap();
    assert!(r >= 0.5, "training correlation {r}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("saliency.gsbq");
    model.save(&path).unwrap();
    let loaded = SaliencyModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    let a = saliency_predict(&model, &images[0]).unwrap();
    let b = saliency_predict(&loaded, &images[0]).unwrap();
    let c = saliency_predict(&model, &images[0]).unwrap();
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a, c);
}

#[test]
fn top_crop_overlaps_a_salient_rectangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut hits = 0;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(96..200), rng.random_range(96..200));
        let (rh, rw) = (rng.random_range(8..40), rng.random_range(8..40));
        let (ry, rx) = (rng.random_range(0..h - rh), rng.random_range(0..w - rw));
        let values = (0..h * w)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                if (ry..ry + rh).contains(&y) && (rx..rx + rw).contains(&x) { 1.0 } else { 0.0 }
            })
            .collect();
        let map = SaliencyMap::new(h, w, values).unwrap();
        let candidates = crop_grid(h, w, 64, 16).unwrap();
        let top = select_top_crops(&map, &candidates, 1).unwrap()[0];
        let overlaps = top.row_offset < ry + rh && ry < top.row_offset + top.size && top.col_offset < rx + rw && rx < top.col_offset + top.size;
        hits += overlaps as usize;
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn grey_images_are_accepted() {
    let (images, maps) = corpus(2);
    let model = saliency_train(&images, &maps, &config()).unwrap();
    let grey = RasterImage::new(128, 160, ColorSpace::Gray, (0..128 * 160).map(|i| (i % 251) as f64).collect()).unwrap();
    let p = saliency_predict(&model, &grey).unwrap();
    assert_eq!((p.height(), p.width()), (128, 160));
}
