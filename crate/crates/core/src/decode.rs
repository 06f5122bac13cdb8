//! From network outputs to a refined pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{RefinerNet, Scalar};
use crate::tensor::Tensor3;
use crate::tensorize::{cell_center, encode_input, normalize, Geometry};
use crate::types::{ImageRaster, Keypoint, Pose};

/// Which confidence a refined joint reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// The input pose's score where the input joint was present, the
    /// refiner's probability for recovered joints.
    Initial,
    /// The refiner's heatmap probability.
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    /// Joints whose heatmap maximum is below `tau` are marked absent.
    pub tau: f64,
    pub stride: usize,
    pub score_mode: ScoreMode,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self::tracking()
    }
}

impl DecodeConfig {
    /// `tau = 0.7`, refiner scores.
    pub fn tracking() -> Self {
        Self {
            tau: 0.7,
            stride: 8,
            score_mode: ScoreMode::Refined,
        }
    }

    /// `tau = 0`, initial scores kept for ranking.
    pub fn pose_estimation() -> Self {
        Self {
            tau: 0.0,
            stride: 8,
            score_mode: ScoreMode::Initial,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        Ok(())
    }
}

/// Per joint: argmax cell (first in row-major order on ties), its
/// probability as score, and the cell center plus the offset (in input
/// pixels) as coordinate. Coordinates are in the crop frame.
pub fn decode<T: Scalar>(probs: &Tensor3<T>, offsets_px: &Tensor3<T>, cfg: &DecodeConfig) -> Result<Pose> {
    let (n, gh, gw) = probs.shape();
    if offsets_px.shape() != (2 * n, gh, gw) || gh == 0 || gw == 0 {
        return Err(Error::ShapeMismatch(format!(
            "heatmap {:?} vs offsets {:?}",
            probs.shape(),
            offsets_px.shape()
        )));
    }
    let mut joints = Vec::with_capacity(n);
    for j in 0..n {
        let plane = probs.channel(j);
        let mut best = 0;
        for (i, &v) in plane.iter().enumerate() {
            if v > plane[best] {
                best = i;
            }
        }
        let (gy, gx) = (best / gw, best % gw);
        let score = plane[best].as_f64();
        let x = cell_center(gx, cfg.stride) + offsets_px.at(2 * j, gy, gx).as_f64();
        let y = cell_center(gy, cfg.stride) + offsets_px.at(2 * j + 1, gy, gx).as_f64();
        let mut k = Keypoint::new(x, y).with_score(score);
        k.present = score >= cfg.tau;
        joints.push(k);
    }
    Ok(Pose::new(joints))
}

/// Anything that maps an encoded `3 + n` channel input to heatmap
/// probabilities and pixel offsets on the stride-8 grid.
pub trait PoseModel: Sync {
    fn joints(&self) -> usize;

    fn predict(&self, input: &Tensor3<f32>) -> Result<(Tensor3<f32>, Tensor3<f32>)>;
}

impl PoseModel for RefinerNet<f32> {
    fn joints(&self) -> usize {
        RefinerNet::joints(self)
    }

    fn predict(&self, input: &Tensor3<f32>) -> Result<(Tensor3<f32>, Tensor3<f32>)> {
        let pred = self.forward(input)?;
        Ok((pred.heat_probs(), pred.offsets_px()))
    }
}

/// Normalizes around `pose_in`, runs the model and maps the decoded pose
/// back to image coordinates. `track_id`, `head_box` and `height_px` are
/// copied from the input.
pub fn refine_pose(
    model: &impl PoseModel,
    image: &ImageRaster,
    pose_in: &Pose,
    geom: &Geometry,
    cfg: &DecodeConfig,
) -> Result<Pose> {
    let n = model.joints();
    if pose_in.len() != n {
        return Err(Error::SchemaMismatch(format!(
            "pose has {} joints, model {}",
            pose_in.len(),
            n
        )));
    }
    let (crop, input_crop, params) = normalize(image, pose_in, geom)?;
    let input = encode_input(&crop, &input_crop, n, geom.blob_radius);
    let (probs, offsets) = model.predict(&input)?;
    let decoded = decode(&probs, &offsets, cfg)?;
    let mut out = params.pose_to_image(&decoded);
    if cfg.score_mode == ScoreMode::Initial {
        for (o, i) in out.joints.iter_mut().zip(&pose_in.joints) {
            if i.present {
                o.score = Some(i.score.unwrap_or(1.0));
            }
        }
    }
    out.track_id = pose_in.track_id;
    out.head_box = pose_in.head_box;
    out.height_px = pose_in.height_px;
    out.top_head_hint = pose_in.top_head_hint;
    Ok(out)
}
