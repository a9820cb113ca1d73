//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use gsbiqa::container::{ModelReader, ModelWriter, Persist};
use gsbiqa::eval::{render, run_experiment_with, synth_params, DatasetManifest, MetricsReport, Protocol};
use gsbiqa::gbrt::{gbrt_fit, gbrt_fit_weighted, gbrt_predict};
use gsbiqa::quality::{predict_quality, train_pipeline_cached, PrepCache};
use gsbiqa::selection::rft_rank;
use gsbiqa::transforms::{dct8x8, idct8x8, saab_fit};
use gsbiqa::{plcc, srocc, GbrtParams, Matrix, QualityConfig, SaliencyModel, TreeEnsemble};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const METRIC_TOL: f64 = 1e-9;
const ISOMETRY_TOL: f64 = 1e-6;
const RELAX_TOL: f64 = 1e-9;
const MIN_SROCC: f64 = 0.80;
const MIN_MONOTONE: f64 = 0.90;
const MAX_MODEL_BYTES: u64 = 10 * 1024 * 1024;
const MAX_PREDICT_MS: f64 = 500.0;

const SALIENCY_SEED: u64 = 1000;
const SALIENCY_IMAGES: usize = 60;
const QUALITY_SEED: u64 = 7;
const QUALITY_IMAGES: usize = 300;
const PROTOCOL_SEED: u64 = 0;
const RUNS: usize = 5;
const BLUR_GRADES: [f64; 4] = [0.0, 2.0, 4.0, 8.0];

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(n: usize, name: &str, o: &Outcome) {
    let mut out = std::io::stdout();
    let _ = writeln!(
        out,
        "{} criterion {n} {name}: {} [{:.1} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        o.elapsed.as_secs_f64()
    );
    let _ = out.flush();
}

fn timed(f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    Outcome {
        pass,
        detail,
        elapsed: t.elapsed(),
    }
}

fn within(o: Outcome, limit: Duration) -> Outcome {
    if o.elapsed <= limit {
        o
    } else {
        Outcome {
            pass: false,
            detail: format!("{}; over the {:.0} s limit", o.detail, limit.as_secs_f64()),
            ..o
        }
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_gsbiqa")).args(args).output().expect("run gsbiqa");
    assert!(
        out.status.success(),
        "gsbiqa {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// Textbook oracles, written independently of the library.

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

fn criterion_metrics() -> Outcome {
    let o = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        let mut with_ties = 0;
        for trial in 0..100 {
            let n = rng.random_range(5..60);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n)
                    .map(|_| {
                        let v: f64 = rng.random_range(-10.0..10.0);
                        if trial % 2 == 0 { v.round() } else { v }
                    })
                    .collect()
            };
            let (x, y) = (draw(&mut rng), draw(&mut rng));
            let ties = oracle_ranks(&x).iter().any(|r| r.fract() != 0.0) || oracle_ranks(&y).iter().any(|r| r.fract() != 0.0);
            with_ties += ties as usize;
            worst = worst.max((plcc(&x, &y).unwrap() - oracle_pearson(&x, &y)).abs());
            worst = worst.max((srocc(&x, &y).unwrap() - oracle_spearman(&x, &y)).abs());
        }
        (
            worst <= METRIC_TOL && with_ties > 0,
            format!("max deviation {worst:.2e} over 100 vector pairs ({with_ties} with ties)"),
        )
    });
    within(o, Duration::from_secs(1))
}

fn random_blocks(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<f64> {
    (0..count * dim).map(|_| rng.random_range(0.0..255.0)).collect()
}

fn criterion_isometries() -> Outcome {
    let o = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut parseval: f64 = 0.0;
        let mut inverse: f64 = 0.0;
        let mut dc: f64 = 0.0;
        let blocks = random_blocks(&mut rng, 1000, 64);
        for b in blocks.chunks(64) {
            let b: [f64; 64] = b.try_into().unwrap();
            let c = dct8x8(&b);
            let e: f64 = b.iter().map(|v| v * v).sum();
            parseval = parseval.max((e - c.iter().map(|v| v * v).sum::<f64>()).abs() / e);
            inverse = idct8x8(&c).iter().zip(&b).fold(inverse, |m, (r, x)| m.max((r - x).abs()));
        }
        for shape in [vec![4usize, 4], vec![8, 8], vec![2, 2, 3]] {
            let d: usize = shape.iter().product();
            let fit = random_blocks(&mut rng, 4 * d + 64, d);
            let kernels = saab_fit(&fit, &shape).unwrap();
            for p in random_blocks(&mut rng, 1000, d).chunks(d) {
                let c = kernels.transform(p);
                let e: f64 = p.iter().map(|v| v * v).sum();
                parseval = parseval.max((e - c.iter().map(|v| v * v).sum::<f64>()).abs() / e);
                inverse = kernels.inverse(&c).iter().zip(p).fold(inverse, |m, (r, x)| m.max((r - x).abs()));
                let mean = p.iter().sum::<f64>() / d as f64;
                dc = dc.max((c[0] - (d as f64).sqrt() * mean).abs());
            }
        }
        (
            parseval <= ISOMETRY_TOL && inverse <= ISOMETRY_TOL && dc <= METRIC_TOL,
            format!("relative energy error {parseval:.1e}, reconstruction error {inverse:.1e}, DC error {dc:.1e}"),
        )
    });
    within(o, Duration::from_secs(5))
}

fn criterion_rft() -> Outcome {
    let o = timed(|| {
        let mut first = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let n = 200;
            let mut rows = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..51).map(|_| rng.random_range(0.0..1.0)).collect();
                let noise: f64 = rng.random_range(-1.0..1.0);
                y.push(row[0] + 0.01 * noise);
                rows.push(row);
            }
            let sel = rft_rank(&Matrix::from_rows(&rows).unwrap(), &y, 16).unwrap();
            first += (sel.ranked_indices[0] == 0) as usize;
        }
        let x = Matrix::from_rows(&(0..10).map(|i| vec![(i / 5) as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 3.0 }).collect();
        let perfect = rft_rank(&x, &y, 16).unwrap().losses[0];
        (
            first >= 95 && perfect == 0.0,
            format!("informative feature first in {first}/100 trials; perfect split loss {perfect}"),
        )
    });
    within(o, Duration::from_secs(10))
}

fn criterion_gbrt() -> Outcome {
    let o = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut monotone = true;
        let mut fits = 0;
        let mut bit_exact = true;
        for depth in 1..=5 {
            for &(shrinkage, colsample) in &[(0.1, 1.0), (0.5, 0.5), (1.0, 0.3)] {
                let n = rng.random_range(20..200);
                let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
                let y: Vec<f64> = rows.iter().map(|r| r[0].sin() + r[1] * r[2] + rng.random_range(-0.1..0.1)).collect();
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
                let x = Matrix::from_rows(&rows).unwrap();
                let params = GbrtParams {
                    rounds: 60,
                    max_depth: depth,
                    shrinkage,
                    min_samples_leaf: 2.0,
                    colsample,
                    seed: fits,
                };
                let (model, history) = gbrt_fit_weighted(&x, &y, &w, &params).unwrap();
                monotone &= history.windows(2).all(|h| h[1] <= h[0] * (1.0 + 1e-12));
                fits += 1;
                let mut wr = ModelWriter::new("ensemble");
                model.store(&mut wr, "m").unwrap();
                let back = TreeEnsemble::load(&ModelReader::from_bytes(&wr.to_bytes().unwrap()).unwrap(), "m").unwrap();
                let (a, b) = (gbrt_predict(&model, &x).unwrap(), gbrt_predict(&back, &x).unwrap());
                bit_exact &= a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits());
            }
        }
        let x = Matrix::from_rows(&(0..10).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = (0..10).map(|i| if i < 4 { 1.0 } else { 6.0 }).collect();
        let step = gbrt_fit(
            &x,
            &y,
            &GbrtParams {
                rounds: 1,
                max_depth: 1,
                shrinkage: 1.0,
                min_samples_leaf: 1.0,
                colsample: 1.0,
                seed: 0,
            },
        )
        .unwrap();
        let pred = gbrt_predict(&step, &x).unwrap();
        let rmse = (pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 10.0).sqrt();
        (
            monotone && bit_exact && rmse == 0.0,
            format!("loss non-increasing on {fits} fits: {monotone}; step RMSE {rmse}; bit-exact reload: {bit_exact}"),
        )
    });
    within(o, Duration::from_secs(10))
}

fn criterion_relaxation(manifest: &DatasetManifest, saliency: &SaliencyModel, cache: &mut PrepCache) -> Outcome {
    timed(|| {
        let idx: Vec<usize> = (0..20).collect();
        let trained = train_pipeline_cached(manifest, &idx, &[], saliency, &QualityConfig::default(), cache).unwrap();
        let mut worst: f64 = 0.0;
        for labels in &trained.label_history {
            for (m, q) in labels.image_means(&labels.local).iter().zip(&labels.global) {
                worst = worst.max((m - q).abs());
            }
        }
        let single = QualityConfig {
            k: 1,
            ..QualityConfig::default()
        };
        let k1 = train_pipeline_cached(manifest, &idx, &[], saliency, &single, cache).unwrap();
        let fixed = k1
            .label_history
            .iter()
            .all(|l| l.local.iter().enumerate().all(|(r, &q)| q == l.global[l.image_of[r]]));
        (
            worst <= RELAX_TOL && fixed,
            format!(
                "max |mean q - Q| {worst:.1e} over {} rounds; k = 1 targets fixed over {} rounds: {fixed}",
                trained.label_history.len(),
                k1.label_history.len()
            ),
        )
    })
}

struct EndToEnd {
    outcome: Outcome,
    report: MetricsReport,
}

fn criterion_end_to_end(dir: &Path, saliency_path: &Path, cache: &mut PrepCache) -> EndToEnd {
    let mut report = None;
    let o = timed(|| {
        let qdir = dir.join("quality");
        cli(&["synth", "--out", s(&qdir), "--count", &QUALITY_IMAGES.to_string(), "--seed", &QUALITY_SEED.to_string()]);
        let manifest = DatasetManifest::read(qdir.join("manifest.csv")).unwrap();
        let saliency = SaliencyModel::load(saliency_path).unwrap();
        let params = synth_params(QUALITY_IMAGES, QUALITY_SEED, 320, 320);
        let protocol = Protocol {
            runs: RUNS,
            seed: PROTOCOL_SEED,
            ..Protocol::default()
        };
        let (mut graded, mut monotone) = (0usize, 0usize);
        let rep = run_experiment_with(&manifest, &saliency, &QualityConfig::default(), &protocol, cache, |_, trained, split| {
            for &i in &split.test {
                let mut scores = Vec::with_capacity(BLUR_GRADES.len());
                for &sigma in &BLUR_GRADES {
                    let p = gsbiqa::eval::SynthParams {
                        blur_sigma: sigma,
                        ..params[i].0.clone()
                    };
                    scores.push(predict_quality(&trained.model, &render(&p)?.0)?);
                }
                graded += 1;
                monotone += scores.windows(2).all(|w| w[1] <= w[0]) as usize;
            }
            Ok(())
        })
        .unwrap();
        let median = rep.median_srocc.unwrap_or(f64::NAN);
        let share = monotone as f64 / graded as f64;
        let per_run: Vec<String> = rep
            .runs
            .iter()
            .map(|r| r.srocc.map_or("undefined".into(), |v| format!("{v:.3}")))
            .collect();
        report = Some(rep);
        (
            median >= MIN_SROCC && share >= MIN_MONOTONE,
            format!(
                "median SROCC {median:.4} (runs {}), blur-monotone {monotone}/{graded} = {:.1}%",
                per_run.join(", "),
                100.0 * share
            ),
        )
    });
    EndToEnd {
        outcome: within(o, Duration::from_secs(15 * 60)),
        report: report.unwrap(),
    }
}

fn criterion_ablation(dir: &Path, saliency_path: &Path, full: &MetricsReport, cache: &mut PrepCache) -> Outcome {
    timed(|| {
        let manifest = DatasetManifest::read(dir.join("quality/manifest.csv")).unwrap();
        let saliency = SaliencyModel::load(saliency_path).unwrap();
        // (crop, global, local) in table order; the full row is reused from criterion 6
        let rows = [
            (false, false, false),
            (true, false, false),
            (false, true, false),
            (false, false, true),
            (true, true, false),
        ];
        let mut lines = Vec::new();
        let mut all_ok = true;
        let mut baseline = f64::NAN;
        for (crop, global, local) in rows {
            let cfg = QualityConfig {
                saliency_crop: crop,
                saliency_global: global,
                local_iterative: local,
                ..QualityConfig::default()
            };
            let runs = if (crop, global, local) == (false, false, false) { RUNS } else { 1 };
            let protocol = Protocol {
                runs,
                seed: PROTOCOL_SEED,
                ..Protocol::default()
            };
            let rep = run_experiment_with(&manifest, &saliency, &cfg, &protocol, cache, |_, _, _| Ok(())).unwrap();
            let m = rep.median_srocc;
            all_ok &= m.is_some_and(f64::is_finite);
            if runs == RUNS {
                baseline = m.unwrap_or(f64::NAN);
            }
            lines.push(format!(
                "{}{}{}={}",
                crop as u8,
                global as u8,
                local as u8,
                m.map_or("undefined".into(), |v| format!("{v:.3}"))
            ));
        }
        let full_m = full.median_srocc.unwrap_or(f64::NAN);
        lines.push(format!("111={full_m:.3}"));
        (
            all_ok && full_m >= baseline,
            format!(
                "six configurations ran [{}]; full {full_m:.4} vs baseline {baseline:.4} over {RUNS} seeds",
                lines.join(" ")
            ),
        )
    })
}

fn criterion_complexity(full: &MetricsReport) -> Outcome {
    timed(|| {
        (
            full.model_size_bytes <= MAX_MODEL_BYTES && full.timing_ms <= MAX_PREDICT_MS,
            format!(
                "model {} bytes (limit {MAX_MODEL_BYTES}), predict {:.1} ms/image (limit {MAX_PREDICT_MS})",
                full.model_size_bytes, full.timing_ms
            ),
        )
    })
}

fn criterion_determinism(dir: &Path, saliency_path: &Path) -> Outcome {
    timed(|| {
        let small = dir.join("small");
        cli(&["synth", "--out", s(&small), "--count", "20", "--seed", "33"]);
        let manifest = small.join("manifest.csv");
        let mut models = Vec::new();
        for n in 0..2 {
            let out = dir.join(format!("det_{n}.gsbq"));
            cli(&[
                "train",
                "--manifest",
                s(&manifest),
                "--saliency-model",
                s(saliency_path),
                "--out",
                s(&out),
                "--seed",
                "5",
            ]);
            models.push(std::fs::read(&out).unwrap());
        }
        let config = dir.join("model_config.json");
        std::fs::write(&config, serde_json::json!({ "saliency_model": saliency_path }).to_string()).unwrap();
        let mut reports = Vec::new();
        for n in 0..2 {
            let out = dir.join(format!("det_{n}.json"));
            cli(&[
                "eval",
                "--manifest",
                s(&manifest),
                "--model-config",
                s(&config),
                "--runs",
                "2",
                "--seed",
                "9",
                "--report",
                s(&out),
            ]);
            let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
            v.as_object_mut().unwrap().remove("timing_ms");
            reports.push(v.to_string());
        }
        let same_models = models[0] == models[1];
        let same_reports = reports[0] == reports[1];
        (
            same_models && same_reports,
            format!(
                "models identical: {same_models} ({} bytes); reports identical apart from wall-clock timing: {same_reports}",
                models[0].len()
            ),
        )
    })
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let dir: PathBuf = tmp.path().to_path_buf();
    let mut results = Vec::new();

    let record = |n: usize, name: &str, o: Outcome| {
        report(n, name, &o);
        o.pass
    };
    results.push(record(1, "metric oracles", criterion_metrics()));
    results.push(record(2, "transform isometries", criterion_isometries()));
    results.push(record(3, "feature test oracle", criterion_rft()));
    results.push(record(4, "boosted trees", criterion_gbrt()));

    let t = Instant::now();
    let sal_dir = dir.join("saliency");
    cli(&["synth", "--out", s(&sal_dir), "--count", &SALIENCY_IMAGES.to_string(), "--seed", &SALIENCY_SEED.to_string()]);
    let saliency_path = dir.join("saliency.gsbq");
    cli(&[
        "saliency-train",
        "--manifest",
        s(&sal_dir.join("saliency_manifest.csv")),
        "--out",
        s(&saliency_path),
    ]);
    println!("saliency detector fitted on {SALIENCY_IMAGES} synthetic images in {:.1} s", t.elapsed().as_secs_f64());

    let mut cache = PrepCache::default();
    let e2e = criterion_end_to_end(&dir, &saliency_path, &mut cache);
    let manifest = DatasetManifest::read(dir.join("quality/manifest.csv")).unwrap();
    let saliency = SaliencyModel::load(&saliency_path).unwrap();
    results.push(record(5, "local relaxation", criterion_relaxation(&manifest, &saliency, &mut cache)));
    results.push(record(6, "end-to-end synthetic", e2e.outcome));
    results.push(record(7, "ablation structure", criterion_ablation(&dir, &saliency_path, &e2e.report, &mut cache)));
    results.push(record(8, "complexity", criterion_complexity(&e2e.report)));
    results.push(record(9, "determinism", criterion_determinism(&dir, &saliency_path)));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
