use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gsbiqa::eval::{run_experiment, synth_generate, DatasetManifest, Protocol};
use gsbiqa::quality::{predict_path, train_pipeline};
use gsbiqa::saliency::{load_saliency_corpus, saliency_train};
use gsbiqa::{QualityConfig, QualityModel, SaliencyConfig, SaliencyModel};

#[derive(Parser)]
#[command(name = "gsbiqa", version, about = "Saliency-guided blind image quality assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the saliency detector on an `image_path,map_path` manifest.
    SaliencyTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the quality model on an `image_path,mos` manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        saliency_model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional validation manifest, used to pick the relaxation rounds.
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        /// JSON quality configuration; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Print the predicted quality of one image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Repeated split-train-test evaluation.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON with `saliency_model` (path) and an optional `quality` object.
        #[arg(long)]
        model_config: PathBuf,
        /// Overrides the saliency model named in the model config.
        #[arg(long)]
        saliency_model: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        ablation: Ablation,
    },
    /// Generate a synthetic quality and saliency corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone, Copy)]
struct Ablation {
    /// Pick sub-images uniformly at random instead of by saliency.
    #[arg(long)]
    no_saliency_crop: bool,
    /// Global features are the sorted local scores only.
    #[arg(long)]
    no_saliency_global: bool,
    /// A single local round with targets fixed at the global score.
    #[arg(long)]
    no_local_iterative: bool,
}

impl Ablation {
    fn apply(self, cfg: &mut QualityConfig) {
        cfg.saliency_crop &= !self.no_saliency_crop;
        cfg.saliency_global &= !self.no_saliency_global;
        cfg.local_iterative &= !self.no_local_iterative;
    }
}

#[derive(Deserialize)]
struct ModelConfigFile {
    saliency_model: Option<PathBuf>,
    #[serde(default)]
    quality: QualityConfig,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::SaliencyTrain { manifest, out, seed } => {
            let (images, maps) = load_saliency_corpus(&manifest)?;
            let mut cfg = SaliencyConfig::default();
            cfg.gbrt.seed = seed;
            let model = saliency_train(&images, &maps, &cfg)?;
            model.save(&out)?;
            eprintln!("saliency model fitted on {} images -> {}", images.len(), out.display());
        }
        Command::Train {
            manifest,
            saliency_model,
            out,
            val_manifest,
            config,
            seed,
            ablation,
        } => {
            let mut cfg: QualityConfig = match &config {
                Some(p) => read_json(p)?,
                None => QualityConfig::default(),
            };
            cfg.seed = seed;
            ablation.apply(&mut cfg);
            let saliency = SaliencyModel::load(&saliency_model)?;
            let train = DatasetManifest::read(&manifest)?;
            let val = val_manifest.as_ref().map(DatasetManifest::read).transpose()?;
            let model = train_pipeline(&train, val.as_ref(), &saliency, &cfg)?;
            model.save(&out)?;
            eprintln!("quality model fitted on {} images -> {}", train.len(), out.display());
        }
        Command::Predict { model, image } => {
            let model = QualityModel::load(&model)?;
            println!("{}", predict_path(&model, &image)?);
        }
        Command::Eval {
            manifest,
            model_config,
            saliency_model,
            runs,
            seed,
            report,
            ablation,
        } => {
            let file: ModelConfigFile = read_json(&model_config)?;
            let sal_path = match (saliency_model, file.saliency_model) {
                (Some(p), _) => p,
                (None, Some(p)) if p.is_relative() => model_config.parent().unwrap_or(Path::new("")).join(p),
                (None, Some(p)) => p,
                (None, None) => bail!("no saliency model: pass --saliency-model or set it in the model config"),
            };
            let mut cfg = file.quality;
            ablation.apply(&mut cfg);
            let saliency = SaliencyModel::load(&sal_path)?;
            let manifest = DatasetManifest::read(&manifest)?;
            let protocol = Protocol {
                runs,
                seed,
                ..Protocol::default()
            };
            let rep = run_experiment(&manifest, &saliency, &cfg, &protocol)?;
            std::fs::write(&report, rep.to_json()?)?;
            let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
            println!(
                "median SROCC {}  median PLCC {}  {:.1} ms/image  model {} bytes",
                show(rep.median_srocc),
                show(rep.median_plcc),
                rep.timing_ms,
                rep.model_size_bytes
            );
        }
        Command::Synth { out, count, seed } => {
            let m = synth_generate(&out, count, seed)?;
            eprintln!("wrote {} images to {}", m.len(), out.display());
        }
    }
    Ok(())
}
