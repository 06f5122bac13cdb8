//! Command-line front end for pose refinement.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use poserefine::datasets::{load_dataset, write_annotations, write_predictions, Dataset};
use poserefine::decode::{DecodeConfig, ScoreMode};
use poserefine::image_io::{load_image, save_png};
use poserefine::metrics::{apply_tau, auc, map_eval, mota_eval, pckh, MetricReport};
use poserefine::net::{init_weights, load_checkpoint, save_checkpoint, train, TrainingData};
use poserefine::parallel::with_jobs;
use poserefine::pipeline::{compare, demo_data, demo_pipeline, format_table, initial_predictions, refine_dataset, PipelineConfig};
use poserefine::rng::derive_seed;
use poserefine::synth::frame_key;
use poserefine::tensorize::{augment, normalize, AugmentConfig, TensorPack};
use poserefine::toy::generate_toy_dataset;
use poserefine::{Error, ErrorClass, ImageRaster, Result};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "poserefine", version, about = "Refine human pose estimates with a small convolutional network")]
struct Cli {
    /// Seed for every random choice; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 runs on the calling thread.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: u32,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic stick-figure dataset (annotations plus PNGs).
    Toy {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the evaluation split settings instead of the training split.
        #[arg(long)]
        eval: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrupt ground-truth annotations into synthetic input poses.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write network inputs and targets for every person as flat binary.
    Encode {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth annotations.
        #[arg(long)]
        gt: PathBuf,
        /// Input poses; synthesized from the ground truth when omitted.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Apply a random rescale and flip per sample.
        #[arg(long)]
        augment: bool,
        #[arg(long)]
        dump: PathBuf,
    },
    /// Train a refiner and save a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Ground-truth annotations; the configured toy data otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine every pose of an annotation file.
    Refine {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep joints scoring at least this much and score joints by the
        /// heatmap; without it every joint is kept with its input score.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Evaluate predictions against ground truth.
    Eval {
        #[arg(value_enum)]
        protocol: Protocol,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Predictions to compare against (adds a difference row).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Drop predicted joints scoring below this before tracking evaluation.
        #[arg(long)]
        tau: Option<f64>,
        /// Matching threshold as a fraction of the head segment.
        #[arg(long, default_value_t = 0.5)]
        r: f64,
        /// Also write the JSON reports here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Toy data, corruption, training, refinement and evaluation in one run.
    Demo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    /// Multi-person mAP.
    Pose,
    /// Single-person PCKh and AUC.
    Pckh,
    /// Per-joint MOTA.
    Track,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Images referenced by `ds`, resolved against the annotation file's
/// directory.
fn load_images(ds: &Dataset, annotations: &Path, jobs: usize) -> Result<Vec<ImageRaster>> {
    let base = annotations.parent().unwrap_or(Path::new("."));
    with_jobs(jobs, || ds.frames.par_iter().map(|f| load_image(&base.join(&f.image))).collect())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    path.with_file_name(name)
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs as usize;
    match cli.command {
        Command::Toy { config, eval, out } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let (toy_cfg, label) = if eval { (&cfg.data.eval, 2) } else { (&cfg.data.train, 1) };
            let toy = generate_toy_dataset(toy_cfg, derive_seed(cfg.seed, label))?;
            std::fs::create_dir_all(&out)?;
            for (f, img) in toy.dataset.frames.iter().zip(&toy.images) {
                save_png(&out.join(&f.image), img)?;
            }
            write_file(&out.join("annotations.json"), &write_annotations(&toy.dataset)?)?;
            println!("{} frames, {} people -> {}", toy.dataset.frames.len(), toy.dataset.pose_count(), out.display());
        }
        Command::Synth { config, input, out } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let gt = load_dataset(&input)?;
            let corrupted = initial_predictions(&gt, &cfg.synth, cfg.seed, jobs)?;
            write_file(&out, &write_predictions(&corrupted)?)?;
            let mut meta = toml::Table::new();
            meta.insert("seed".into(), toml::Value::Integer(cfg.seed as i64));
            meta.insert("source".into(), toml::Value::String(input.display().to_string()));
            meta.insert("synth".into(), toml::Value::try_from(&cfg.synth).map_err(|e| Error::Config(e.to_string()))?);
            write_file(&sidecar(&out), toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?.as_bytes())?;
        }
        Command::Encode { config, gt, input, augment: aug, dump } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let truth = load_dataset(&gt)?;
            let inputs = match &input {
                Some(p) => load_dataset(p)?,
                None => initial_predictions(&truth, &cfg.synth, cfg.seed, jobs)?,
            };
            if inputs.frames.len() != truth.frames.len() {
                return Err(Error::Data("input and ground truth differ in frame count".into()));
            }
            let images = load_images(&truth, &gt, jobs)?;
            let geom = &cfg.train.geometry;
            let augment_cfg = if aug {
                cfg.train.augment.clone()
            } else {
                AugmentConfig { scale_jitter: 0.0, flip_prob: 0.0 }
            };
            let mut w = std::io::BufWriter::new(std::fs::File::create(&dump)?);
            let mut count = 0;
            for (fi, (tf, inf)) in truth.frames.iter().zip(&inputs.frames).enumerate() {
                if tf.people.len() != inf.people.len() {
                    return Err(Error::Data(format!("frame {fi}: person count differs")));
                }
                for (pi, (g, p)) in tf.people.iter().zip(&inf.people).enumerate() {
                    if p.present_count() == 0 {
                        continue;
                    }
                    let (crop, in_crop, params) = normalize(&images[fi], p, geom)?;
                    let g_crop = params.pose_to_crop(g);
                    let mut stream = frame_key(cfg.seed, tf, pi).stream(poserefine::rng::StreamTag::Augment);
                    let (crop, g_aug, in_aug) = augment(&crop, &g_crop, &in_crop, &truth.schema, &augment_cfg, &mut stream);
                    TensorPack::build(&crop, &in_aug, &g_aug, truth.schema.len(), geom).dump(&mut w)?;
                    count += 1;
                }
            }
            w.flush()?;
            println!("{count} samples -> {}", dump.display());
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let (dataset, images) = match &data {
                Some(p) => {
                    let ds = load_dataset(p)?;
                    let imgs = load_images(&ds, p, jobs)?;
                    (ds, imgs)
                }
                None => {
                    let (train_data, _) = demo_data(&cfg)?;
                    (train_data.dataset, train_data.images)
                }
            };
            let arch = cfg.train.arch(dataset.schema.len());
            let mut net = init_weights::<f32>(&arch, None, derive_seed(cfg.seed, 4))?;
            let training = TrainingData::new(&dataset, images)?;
            let report = train(&mut net, &training, &cfg.synth, &cfg.train.train_config(), derive_seed(cfg.seed, 5), jobs)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_checkpoint(&out, &net)?;
            for (e, l) in report.epoch_losses.iter().enumerate() {
                println!("epoch {e}: mean loss {l:.5}");
            }
            println!("{} steps, {} samples skipped -> {}", report.steps, report.skipped, out.display());
        }
        Command::Refine { ckpt, config, input, out, tau } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let net = load_checkpoint(&ckpt)?;
            let inputs = load_dataset(&input)?;
            let images = load_images(&inputs, &input, jobs)?;
            let decode_cfg = match tau {
                Some(t) => DecodeConfig {
                    score_mode: ScoreMode::Refined,
                    ..DecodeConfig::tracking().with_tau(t)
                },
                None => DecodeConfig::pose_estimation(),
            };
            decode_cfg.validate()?;
            let refined = refine_dataset(&net, &images, &inputs, &cfg.train.geometry, &decode_cfg, jobs)?;
            write_file(&out, &write_predictions(&refined)?)?;
        }
        Command::Eval { protocol, gt, pred, baseline, tau, r, json } => {
            let truth = load_dataset(&gt)?;
            let reports = |path: &Path| -> Result<Vec<MetricReport>> {
                let p = load_dataset(path)?;
                if p.schema.names() != truth.schema.names() {
                    return Err(Error::SchemaMismatch(format!("{} uses a different joint schema", path.display())));
                }
                evaluate(protocol, &truth, &p, r, tau)
            };
            let current = reports(&pred)?;
            let text = match &baseline {
                Some(b) => {
                    let cmp = compare(reports(b)?, current.clone());
                    format_table(&cmp.rows)
                }
                None => single_table(&current),
            };
            let body = serde_json::to_string_pretty(&current.iter().map(|r| serde_json::from_str::<serde_json::Value>(&r.to_json()).expect("report is JSON")).collect::<Vec<_>>())
                .expect("reports serialize");
            if let Some(p) = json {
                write_file(&p, body.as_bytes())?;
            } else {
                println!("{body}");
            }
            print!("{text}");
        }
        Command::Demo { config, out } => {
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let o = demo_pipeline(&cfg, Some(&out), jobs)?;
            print!("{}", o.table());
        }
    }
    Ok(())
}

fn evaluate(protocol: Protocol, gt: &Dataset, pred: &Dataset, r: f64, tau: Option<f64>) -> Result<Vec<MetricReport>> {
    if !(r > 0.0) {
        return Err(Error::Config("r must be positive".into()));
    }
    let flat = |d: &Dataset| d.frames.iter().flat_map(|f| f.people.iter().cloned()).collect::<Vec<_>>();
    Ok(match protocol {
        Protocol::Pose => vec![map_eval(&pred.frames, &gt.frames, &gt.schema, r)?],
        Protocol::Pckh => {
            let (p, g) = (flat(pred), flat(gt));
            vec![pckh(&p, &g, &gt.schema, r)?, auc(&p, &g, &gt.schema)?]
        }
        Protocol::Track => {
            let frames = match tau {
                Some(t) => apply_tau(&pred.frames, t),
                None => pred.frames.clone(),
            };
            let mut rep = mota_eval(&frames, &gt.frames, &gt.schema, r)?;
            rep.tau = tau;
            vec![rep]
        }
    })
}

fn single_table(reports: &[MetricReport]) -> String {
    let rows = compare(reports.to_vec(), reports.to_vec()).rows;
    let mut s = format!("{:<10}", "Method");
    for r in &rows {
        s.push_str(&format!(" {:>10}", r.metric));
    }
    s.push_str(&format!("\n{:<10}", "Predicted"));
    for r in &rows {
        s.push_str(&format!(" {:>10.2}", r.refined));
    }
    s.push('\n');
    s
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
