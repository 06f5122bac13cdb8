//! Plain SGD over synthesized samples.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{LossWeights, TargetView};
use super::RefinerNet;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::parallel::with_jobs;
use crate::rng::{derive_seed, RngKey, StreamTag};
use crate::synth::{frame_key, synthesize_input, SynthConfig};
use crate::tensorize::{augment, normalize, AugmentConfig, Geometry, TensorPack};
use crate::types::{ImageRaster, Pose};

/// One piecewise-constant learning-rate segment; `epochs` may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub epochs: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub segments: Vec<Segment>,
    pub batch_size: usize,
}

impl Default for TrainSchedule {
    /// 0.005 for a third of an epoch, then 0.02 for 15 epochs, 0.002 for 10
    /// and 0.001 for 10; one sample per batch.
    fn default() -> Self {
        let s = |epochs, lr| Segment { epochs, lr };
        Self {
            segments: vec![s(1.0 / 3.0, 0.005), s(15.0, 0.02), s(10.0, 0.002), s(10.0, 0.001)],
            batch_size: 1,
        }
    }
}

impl TrainSchedule {
    pub fn constant(epochs: f64, lr: f64) -> Self {
        Self {
            segments: vec![Segment { epochs, lr }],
            batch_size: 1,
        }
    }

    /// The default shape with every segment multiplied by `factor` in
    /// length and learning rate multiplied by `lr_factor`.
    pub fn scaled(factor: f64, lr_factor: f64) -> Self {
        let mut s = Self::default();
        for seg in &mut s.segments {
            seg.epochs *= factor;
            seg.lr *= lr_factor;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("schedule has no segments".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.epochs > 0.0 && s.epochs.is_finite()) {
                return Err(Error::Config(format!("segment {i}: epochs must be positive")));
            }
            if !(s.lr >= 0.0 && s.lr.is_finite()) {
                return Err(Error::Config(format!("segment {i}: lr must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> f64 {
        self.segments.iter().map(|s| s.epochs).sum()
    }

    /// Per-sample learning rates for a dataset of `samples` items.
    pub fn sample_rates(&self, samples: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let mut boundary = 0.0;
        for s in &self.segments {
            boundary += s.epochs * samples as f64;
            let end = boundary.round() as usize;
            while out.len() < end {
                out.push(s.lr);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
    pub geometry: Geometry,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: TrainSchedule::default(),
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
            geometry: Geometry::default(),
        }
    }
}

/// A frame of training data with its decoded image.
#[derive(Debug, Clone)]
pub struct TrainingFrame {
    pub image: ImageRaster,
    pub annotation: crate::types::FrameAnnotation,
}

/// Ground-truth frames with images.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub schema: crate::types::JointSchema,
    pub frames: Vec<TrainingFrame>,
}

impl TrainingData {
    pub fn new(dataset: &Dataset, images: Vec<ImageRaster>) -> Result<Self> {
        if images.len() != dataset.frames.len() {
            return Err(Error::Data(format!(
                "{} images for {} frames",
                images.len(),
                dataset.frames.len()
            )));
        }
        Ok(Self {
            schema: dataset.schema.clone(),
            frames: images
                .into_iter()
                .zip(&dataset.frames)
                .map(|(image, f)| TrainingFrame {
                    image,
                    annotation: f.clone(),
                })
                .collect(),
        })
    }

    /// `(frame, person)` pairs in dataset order.
    pub fn samples(&self) -> Vec<(usize, usize)> {
        self.frames
            .iter()
            .enumerate()
            .flat_map(|(f, fr)| (0..fr.annotation.people.len()).map(move |p| (f, p)))
            .collect()
    }
}

/// Synthesizes, normalizes, augments and encodes one sample. Returns `None`
/// when the corrupted input has no present joints.
pub fn prepare_sample(
    data: &TrainingData,
    frame: usize,
    person: usize,
    synth: &SynthConfig,
    cfg: &TrainConfig,
    key: &RngKey,
) -> Result<Option<TensorPack>> {
    let fr = &data.frames[frame];
    let gt = &fr.annotation.people[person];
    let neighbors: Vec<Pose> = fr
        .annotation
        .people
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != person)
        .map(|(_, p)| p.clone())
        .collect();
    let input = synthesize_input(gt, &neighbors, &data.schema, synth, key)?;
    if input.present_count() == 0 {
        return Ok(None);
    }
    let (crop, input_crop, params) = normalize(&fr.image, &input, &cfg.geometry)?;
    let gt_crop = params.pose_to_crop(gt);
    let (crop, gt_aug, input_aug) = augment(
        &crop,
        &gt_crop,
        &input_crop,
        &data.schema,
        &cfg.augment,
        &mut key.stream(StreamTag::Augment),
    );
    Ok(Some(TensorPack::build(
        &crop,
        &input_aug,
        &gt_aug,
        data.schema.len(),
        &cfg.geometry,
    )))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub skipped: usize,
    /// Loss of every processed sample, in order.
    pub sample_losses: Vec<f64>,
    /// Mean sample loss per (possibly partial) epoch.
    pub epoch_losses: Vec<f64>,
}

const PREP_CHUNK: usize = 32;

/// Trains `net` in place. Sample order and corruption are redrawn every
/// epoch from `seed`; preparation may run on `jobs` workers but samples are
/// consumed in index order.
pub fn train(
    net: &mut RefinerNet<f32>,
    data: &TrainingData,
    synth: &SynthConfig,
    cfg: &TrainConfig,
    seed: u64,
    jobs: usize,
) -> Result<TrainReport> {
    cfg.schedule.validate()?;
    cfg.geometry.validate()?;
    synth.validate()?;
    if cfg.geometry.stride != super::NET_STRIDE {
        return Err(Error::Config(format!(
            "geometry stride {} differs from the network stride {}",
            cfg.geometry.stride,
            super::NET_STRIDE
        )));
    }
    if data.schema.len() != net.joints() {
        return Err(Error::ShapeMismatch(format!(
            "schema has {} joints, network {}",
            data.schema.len(),
            net.joints()
        )));
    }
    let samples = data.samples();
    if samples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let rates = cfg.schedule.sample_rates(samples.len());
    let total = rates.len();

    // global sample index -> (frame, person, key)
    let plan = |g: usize| {
        let epoch = (g / samples.len()) as u64;
        let epoch_seed = derive_seed(seed, epoch);
        let mut order = samples.clone();
        order.shuffle(RngKey::from_seed(epoch_seed).stream(StreamTag::Order).rng());
        (epoch, epoch_seed, order)
    };

    let mut report = TrainReport::default();
    let mut grads = vec![0f32; net.params().len()];
    let mut batch_fill = 0;
    let mut epoch_sum = 0.0;
    let mut epoch_count = 0usize;
    let mut current: Option<(u64, u64, Vec<(usize, usize)>)> = None;

    let mut g = 0;
    while g < total {
        let epoch = (g / samples.len()) as u64;
        if current.as_ref().map(|c| c.0) != Some(epoch) {
            current = Some(plan(g));
        }
        let (_, epoch_seed, order) = current.as_ref().expect("epoch plan");
        let epoch_end = ((epoch as usize + 1) * samples.len()).min(total);
        let chunk_end = (g + PREP_CHUNK).min(epoch_end);
        let packs = with_jobs(jobs, || {
            (g..chunk_end)
                .into_par_iter()
                .map(|i| {
                    let (f, p) = order[i % samples.len()];
                    let key = frame_key(*epoch_seed, &data.frames[f].annotation, p);
                    prepare_sample(data, f, p, synth, cfg, &key)
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (i, pack) in (g..chunk_end).zip(packs) {
            let Some(pack) = pack else {
                report.skipped += 1;
                continue;
            };
            let targets = TargetView {
                heatmap: &pack.heatmap_target,
                offsets: &pack.offset_target,
                mask: &pack.offset_mask,
            };
            let loss = net.loss_and_grad(&pack.input, &targets, cfg.loss, &mut grads)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at sample {i}")));
            }
            report.sample_losses.push(loss.total);
            epoch_sum += loss.total;
            epoch_count += 1;
            batch_fill += 1;
            if batch_fill == cfg.schedule.batch_size {
                sgd_step(net, &mut grads, rates[i]);
                batch_fill = 0;
                report.steps += 1;
            }
        }
        g = chunk_end;
        if g == epoch_end {
            if epoch_count > 0 {
                report.epoch_losses.push(epoch_sum / epoch_count as f64);
                log::info!("epoch {} mean loss {:.5}", epoch, epoch_sum / epoch_count as f64);
            }
            epoch_sum = 0.0;
            epoch_count = 0;
        }
    }
    if batch_fill > 0 {
        sgd_step(net, &mut grads, rates[total - 1]);
        report.steps += 1;
    }
    if net.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("parameters diverged".into()));
    }
    Ok(report)
}

fn sgd_step(net: &mut RefinerNet<f32>, grads: &mut [f32], lr: f64) {
    let lr = lr as f32;
    for (p, g) in net.params_mut().iter_mut().zip(grads.iter_mut()) {
        *p -= lr * *g;
        *g = 0.0;
    }
}
