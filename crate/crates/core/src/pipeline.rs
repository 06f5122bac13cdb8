//! End-to-end runs on the toy world: generate, corrupt, train, refine,
//! evaluate before and after.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{write_predictions, Dataset};
use crate::decode::{refine_pose, DecodeConfig, PoseModel, ScoreMode};
use crate::error::{Error, Result};
use crate::image_io::save_png;
use crate::metrics::{apply_tau, auc, map_eval, mota_eval, pckh, MetricReport};
use crate::net::{init_weights, save_checkpoint, train, ArchConfig, LayerSpec, LossWeights, RefinerNet, TrainConfig, TrainReport, TrainSchedule, TrainingData};
use crate::parallel::with_jobs;
use crate::rng::derive_seed;
use crate::synth::{synthesize_dataset, SynthConfig};
use crate::tensorize::{AugmentConfig, Geometry};
use crate::toy::{generate_toy_dataset, ToyConfig, ToyData};
use crate::types::{ImageRaster, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train: ToyConfig,
    pub eval: ToyConfig,
    /// Number of evaluation frames written as SVG overlays.
    pub overlays: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train: ToyConfig {
                sequences: 84,
                frames_per_sequence: 3,
                ..ToyConfig::default()
            },
            eval: ToyConfig {
                sequences: 16,
                frames_per_sequence: 5,
                ..ToyConfig::default()
            },
            overlays: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub schedule: TrainSchedule,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
    pub geometry: Geometry,
    pub layers: Vec<LayerSpec>,
    pub heat_bias_init: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let arch = ArchConfig::default_for(1);
        Self {
            schedule: TrainSchedule::scaled(7.0 / (35.0 + 1.0 / 3.0), 150.0),
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
            geometry: toy_geometry(),
            layers: arch.layers,
            heat_bias_init: -4.0,
        }
    }
}

impl TrainSection {
    pub fn arch(&self, joints: usize) -> ArchConfig {
        ArchConfig {
            joints,
            layers: self.layers.clone(),
            heat_bias_init: self.heat_bias_init,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule.clone(),
            loss: self.loss,
            augment: self.augment.clone(),
            geometry: self.geometry.clone(),
        }
    }
}

/// Normalization geometry for toy figures: the reference height shrinks
/// from 340 to 96 pixels and margin and radii shrink with it (radii kept
/// large enough for the stride-8 grid).
pub fn toy_geometry() -> Geometry {
    Geometry {
        ref_height: 96.0,
        margin: 48.0,
        blob_radius: 5.0,
        target_radius: 6.0,
        ..Geometry::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Confidence threshold for tracking evaluation.
    pub tau: f64,
    /// PCKh distance ratio.
    pub r: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { tau: 0.7, r: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synth: SynthConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection::default(),
            synth: SynthConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.train.validate()?;
        self.data.eval.validate()?;
        self.synth.validate()?;
        self.train.schedule.validate()?;
        self.train.geometry.validate()?;
        self.train.arch(1).validate()?;
        DecodeConfig::tracking().with_tau(self.eval.tau).validate()?;
        if !(self.eval.r > 0.0) {
            return Err(Error::Config("eval.r must be positive".into()));
        }
        Ok(())
    }

    /// A few seconds of work; used in tests and smoke runs.
    pub fn tiny() -> Self {
        let mut cfg = Self::default();
        cfg.data.train.sequences = 3;
        cfg.data.train.frames_per_sequence = 2;
        cfg.data.eval.sequences = 2;
        cfg.data.eval.frames_per_sequence = 2;
        cfg.data.overlays = 1;
        cfg.train.schedule = TrainSchedule::constant(1.0, 0.1);
        cfg.train.layers = vec![
            LayerSpec { channels: 4, kernel: 3, stride: 2 },
            LayerSpec { channels: 4, kernel: 3, stride: 2 },
            LayerSpec { channels: 8, kernel: 3, stride: 2 },
        ];
        cfg
    }
}

/// Initial estimates: ground truth corrupted by the synthesis model, with
/// every present joint scored 1.0.
pub fn initial_predictions(gt: &Dataset, synth: &SynthConfig, seed: u64, jobs: usize) -> Result<Dataset> {
    let mut ds = synthesize_dataset(gt, synth, seed, jobs)?;
    for f in &mut ds.frames {
        for p in &mut f.people {
            for k in p.joints.iter_mut().filter(|k| k.present) {
                k.score.get_or_insert(1.0);
            }
        }
    }
    Ok(ds)
}

/// Refines every pose of `inputs`. Poses without present joints stay
/// empty.
pub fn refine_dataset(
    model: &impl PoseModel,
    images: &[ImageRaster],
    inputs: &Dataset,
    geom: &Geometry,
    cfg: &DecodeConfig,
    jobs: usize,
) -> Result<Dataset> {
    if images.len() != inputs.frames.len() {
        return Err(Error::Data(format!(
            "{} images for {} frames",
            images.len(),
            inputs.frames.len()
        )));
    }
    let frames = with_jobs(jobs, || {
        inputs
            .frames
            .par_iter()
            .zip(images.par_iter())
            .map(|(f, img)| {
                let people = f
                    .people
                    .iter()
                    .map(|p| {
                        if p.present_count() == 0 {
                            Ok(p.clone())
                        } else {
                            refine_pose(model, img, p, geom, cfg)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(crate::types::FrameAnnotation {
                    people,
                    ..f.clone()
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Dataset::new(inputs.schema.clone(), frames)
}

fn flat_people(ds: &Dataset) -> Vec<Pose> {
    ds.frames.iter().flat_map(|f| f.people.iter().cloned()).collect()
}

/// Initial and refined value of one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub metric: String,
    pub initial: f64,
    pub refined: f64,
    pub delta: f64,
}

/// Metrics of initial and refined predictions against the same ground
/// truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<DeltaRow>,
    pub initial: Vec<MetricReport>,
    pub refined: Vec<MetricReport>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// PCKh and AUC on `pose_preds`, mAP on `pose_preds`, MOTA on `track_preds`
/// (already thresholded).
pub fn evaluate_all(gt: &Dataset, pose_preds: &Dataset, track_preds: &Dataset, r: f64, tau: f64) -> Result<Vec<MetricReport>> {
    let gts = flat_people(gt);
    let pp = flat_people(pose_preds);
    let mut mota = mota_eval(&track_preds.frames, &gt.frames, &gt.schema, r)?;
    mota.tau = Some(tau);
    Ok(vec![
        pckh(&pp, &gts, &gt.schema, r)?,
        auc(&pp, &gts, &gt.schema)?,
        map_eval(&pose_preds.frames, &gt.frames, &gt.schema, r)?,
        mota,
    ])
}

pub fn compare(initial: Vec<MetricReport>, refined: Vec<MetricReport>) -> Comparison {
    let rows = initial
        .iter()
        .zip(&refined)
        .map(|(a, b)| DeltaRow {
            metric: display_name(a),
            initial: a.aggregate,
            refined: b.aggregate,
            delta: b.aggregate - a.aggregate,
        })
        .collect();
    Comparison { rows, initial, refined }
}

fn display_name(r: &MetricReport) -> String {
    match r.metric.as_str() {
        "pckh" => format!("mPCKh@{}", r.thresholds[0]),
        "auc" => "AUC".into(),
        "map" => "mAP".into(),
        "mota" => "mMOTA".into(),
        other => other.into(),
    }
}

/// Plain-text table: one row per method, one column per metric, and a
/// final row with the differences.
pub fn format_table(rows: &[DeltaRow]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<10}", "Method");
    for r in rows {
        let _ = write!(s, " {:>10}", r.metric);
    }
    s.push('\n');
    for (label, pick) in [("Initial", 0), ("Refined", 1), ("Delta", 2)] {
        let _ = write!(s, "{label:<10}");
        for r in rows {
            let v = [r.initial, r.refined, r.delta][pick];
            if pick == 2 {
                let _ = write!(s, " {:>+10.2}", v);
            } else {
                let _ = write!(s, " {:>10.2}", v);
            }
        }
        s.push('\n');
    }
    s
}

const SKELETON: [(usize, usize); 14] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 4),
    (4, 5),
    (6, 7),
    (7, 8),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 2),
    (9, 3),
    (12, 13),
    (13, 14),
];

fn svg_pose(s: &mut String, pose: &Pose, dx: f64, color: &str) {
    let n = pose.joints.len();
    for &(a, b) in SKELETON.iter().filter(|(a, b)| *a < n && *b < n) {
        if let (Some(p), Some(q)) = (pose.joints[a].position(), pose.joints[b].position()) {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
                p.x + dx,
                p.y,
                q.x + dx,
                q.y
            );
        }
    }
    for k in pose.joints.iter().filter(|k| k.present) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, k.x + dx, k.y);
    }
}

/// Three panels side by side (ground truth, initial, refined) over the
/// frame image at `href`.
pub fn overlay_svg(href: &str, width: usize, height: usize, panels: [&[Pose]; 3]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" width="{}" height="{}">"#,
        3 * width,
        height + 20
    );
    for (i, (title, color)) in [("ground truth", "#00e000"), ("initial", "#ff3030"), ("refined", "#30a0ff")].iter().enumerate() {
        let dx = (i * width) as f64;
        let _ = writeln!(
            s,
            r#"<image x="{dx}" y="0" width="{width}" height="{height}" xlink:href="{href}"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.0}" y="{}" font-family="sans-serif" font-size="14">{title}</text>"#,
            dx + 4.0,
            height + 15
        );
        for p in panels[i] {
            svg_pose(&mut s, p, dx, color);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Everything a demo run produces.
#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub comparison: Comparison,
    pub train_report: TrainReport,
    pub net: RefinerNet<f32>,
    pub eval: ToyData,
    pub initial: Dataset,
    pub refined_pose: Dataset,
    pub refined_track: Dataset,
}

impl DemoOutput {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.comparison).expect("report serializes")
    }

    pub fn table(&self) -> String {
        format_table(&self.comparison.rows)
    }
}

/// Train-set and eval-set toy worlds for a configuration.
pub fn demo_data(cfg: &PipelineConfig) -> Result<(ToyData, ToyData)> {
    let train = generate_toy_dataset(&cfg.data.train, derive_seed(cfg.seed, 1))?;
    let eval = generate_toy_dataset(&cfg.data.eval, derive_seed(cfg.seed, 2))?;
    Ok((train, eval))
}

/// Trains a refiner on `train` with the configured corruption.
pub fn train_refiner(cfg: &PipelineConfig, train_data: &ToyData, jobs: usize) -> Result<(RefinerNet<f32>, TrainReport)> {
    let schema = &train_data.dataset.schema;
    let arch = cfg.train.arch(schema.len());
    let mut net = init_weights::<f32>(&arch, None, derive_seed(cfg.seed, 4))?;
    let data = TrainingData::new(&train_data.dataset, train_data.images.clone())?;
    let report = train(&mut net, &data, &cfg.synth, &cfg.train.train_config(), derive_seed(cfg.seed, 5), jobs)?;
    Ok((net, report))
}

/// Refines `initial` in both modes and compares against ground truth.
pub fn evaluate_refiner(
    cfg: &PipelineConfig,
    model: &impl PoseModel,
    eval: &ToyData,
    initial: &Dataset,
    jobs: usize,
) -> Result<(Dataset, Dataset, Comparison)> {
    let geom = &cfg.train.geometry;
    let pose_cfg = DecodeConfig::pose_estimation();
    let track_cfg = DecodeConfig {
        score_mode: ScoreMode::Refined,
        ..DecodeConfig::tracking().with_tau(cfg.eval.tau)
    };
    let refined_pose = refine_dataset(model, &eval.images, initial, geom, &pose_cfg, jobs)?;
    let refined_track = refine_dataset(model, &eval.images, initial, geom, &track_cfg, jobs)?;
    let initial_track = Dataset::new(initial.schema.clone(), apply_tau(&initial.frames, cfg.eval.tau))?;
    let before = evaluate_all(&eval.dataset, initial, &initial_track, cfg.eval.r, cfg.eval.tau)?;
    let after = evaluate_all(&eval.dataset, &refined_pose, &refined_track, cfg.eval.r, cfg.eval.tau)?;
    Ok((refined_pose, refined_track, compare(before, after)))
}

/// Generates toy data, corrupts the evaluation set into initial estimates,
/// trains a refiner, refines, and evaluates before and after. With `out`,
/// predictions, reports, the checkpoint and overlays are written there.
pub fn demo_pipeline(cfg: &PipelineConfig, out: Option<&Path>, jobs: usize) -> Result<DemoOutput> {
    cfg.validate()?;
    let (train_data, eval) = demo_data(cfg)?;
    let initial = initial_predictions(&eval.dataset, &cfg.synth, derive_seed(cfg.seed, 3), jobs)?;
    let (net, train_report) = train_refiner(cfg, &train_data, jobs)?;
    let (refined_pose, refined_track, comparison) = evaluate_refiner(cfg, &net, &eval, &initial, jobs)?;
    let output = DemoOutput {
        comparison,
        train_report,
        net,
        eval,
        initial,
        refined_pose,
        refined_track,
    };
    if let Some(dir) = out {
        write_demo_outputs(cfg, &output, dir)?;
    }
    Ok(output)
}

fn write_demo_outputs(cfg: &PipelineConfig, o: &DemoOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("overlays"))?;
    std::fs::write(dir.join("gt.json"), crate::datasets::write_annotations(&o.eval.dataset)?)?;
    std::fs::write(dir.join("initial.json"), write_predictions(&o.initial)?)?;
    std::fs::write(dir.join("refined_pose.json"), write_predictions(&o.refined_pose)?)?;
    std::fs::write(dir.join("refined_track.json"), write_predictions(&o.refined_track)?)?;
    std::fs::write(dir.join("report.json"), o.report_json())?;
    std::fs::write(dir.join("report.txt"), o.table())?;
    std::fs::write(dir.join("train_log.json"), serde_json::to_string_pretty(&o.train_report).expect("log serializes"))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())?;
    save_checkpoint(&dir.join("model.prck"), &o.net)?;
    for (i, f) in o.eval.dataset.frames.iter().enumerate().take(cfg.data.overlays) {
        let img = &o.eval.images[i];
        save_png(&dir.join("overlays").join(&f.image), img)?;
        let svg = overlay_svg(
            &f.image,
            img.width(),
            img.height(),
            [&f.people, &o.initial.frames[i].people, &o.refined_pose.frames[i].people],
        );
        let name = Path::new(&f.image).with_extension("svg");
        std::fs::write(dir.join("overlays").join(name), svg)?;
    }
    Ok(())
}
