//! Evaluation metrics: PCKh and its AUC, greedy-matched mAP, and per-joint
//! MOTA.
//!
//! Distances are normalized by the ground-truth head segment; a prediction
//! is correct at ratio `r` when it lies within `r` times the head-segment
//! length. Ground-truth poses without a head segment are left out and
//! counted in [`MetricReport::skipped_poses`]. Per-joint values and
//! aggregates are percentages.

mod map;
mod mota;
mod pckh;

pub use map::{average_precision, map_eval, pose_similarity};
pub use mota::mota_eval;
pub use pckh::{auc, auc_thresholds, pckh};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FrameAnnotation, JointSchema, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gt: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.gt += o.gt;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointResult {
    pub joint: String,
    /// `None` when the joint never occurs in the ground truth.
    pub value: Option<f64>,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    /// Distance ratio(s) relative to the head-segment length.
    pub thresholds: Vec<f64>,
    /// Confidence threshold applied to predictions before evaluation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub per_joint: Vec<JointResult>,
    /// Mean of the defined per-joint values.
    pub aggregate: f64,
    pub counts: Counts,
    pub skipped_poses: usize,
}

impl MetricReport {
    fn assemble(
        metric: &str,
        thresholds: Vec<f64>,
        schema: &JointSchema,
        values: Vec<Option<f64>>,
        counts: Vec<Counts>,
        skipped_poses: usize,
    ) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let aggregate = if defined.is_empty() {
            0.0
        } else {
            defined.iter().sum::<f64>() / defined.len() as f64
        };
        let mut total = Counts::default();
        for c in &counts {
            total += *c;
        }
        Self {
            metric: metric.into(),
            thresholds,
            tau: None,
            per_joint: schema
                .names()
                .iter()
                .zip(values)
                .zip(counts)
                .map(|((name, value), counts)| JointResult {
                    joint: name.clone(),
                    value,
                    counts,
                })
                .collect(),
            aggregate,
            counts: total,
            skipped_poses,
        }
    }

    pub fn value_of(&self, joint: &str) -> Option<f64> {
        self.per_joint.iter().find(|j| j.joint == joint).and_then(|j| j.value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Length of the top-head to bottom-head segment.
pub fn head_norm(gt: &Pose, schema: &JointSchema) -> Result<f64> {
    let (top, bottom) = schema.head_pair().ok_or(Error::HeadSegmentMissing)?;
    match (gt.joints.get(top).and_then(|k| k.position()), gt.joints.get(bottom).and_then(|k| k.position())) {
        (Some(a), Some(b)) => Ok(a.dist(b)),
        _ => Err(Error::HeadSegmentMissing),
    }
}

fn check_frames(preds: &[FrameAnnotation], gts: &[FrameAnnotation]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::Data(format!(
            "{} prediction frames for {} ground-truth frames",
            preds.len(),
            gts.len()
        )));
    }
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        if p.sequence_id != g.sequence_id || p.frame_index != g.frame_index {
            return Err(Error::Data(format!("prediction frame {i} does not line up with the ground truth")));
        }
    }
    Ok(())
}

fn check_schema(poses: &[&Pose], schema: &JointSchema) -> Result<()> {
    for p in poses {
        p.validate(schema)?;
    }
    Ok(())
}

/// Marks joints with a score below `tau` absent.
pub fn apply_tau(frames: &[FrameAnnotation], tau: f64) -> Vec<FrameAnnotation> {
    frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            for p in &mut f.people {
                for k in &mut p.joints {
                    if k.present && k.score.is_some_and(|s| s < tau) {
                        k.present = false;
                    }
                }
            }
            f
        })
        .collect()
}
