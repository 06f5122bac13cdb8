//! Synthetic corruption of ground-truth poses.
//!
//! Four error models turn a ground-truth pose into a plausible "initial
//! estimate": T1 jitters joints, T2 swaps left/right counterparts, T3 moves a
//! joint onto the same (or mirrored) joint of a nearby person and T4 deletes
//! joints. Each model draws from its own keyed stream.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::parallel::with_jobs;
use crate::rng::{RngKey, StreamTag, UniformSource};
use crate::types::{FrameAnnotation, JointSchema, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transform {
    T1,
    T2,
    T3,
    T4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub shift_short_prob: f64,
    pub shift_short_max: f64,
    pub shift_long_max: f64,
    pub swap_prob: f64,
    pub steal_prob: f64,
    pub steal_radius: f64,
    pub drop_prob: f64,
    /// Transforms applied, in this order.
    pub order: Vec<Transform>,
    /// Joint names removed from every corrupted pose regardless of
    /// `drop_prob`.
    pub forced_drop: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            shift_short_prob: 0.9,
            shift_short_max: 25.0,
            shift_long_max: 125.0,
            swap_prob: 0.1,
            steal_prob: 0.3,
            steal_radius: 75.0,
            drop_prob: 0.3,
            order: vec![Transform::T1, Transform::T2, Transform::T3, Transform::T4],
            forced_drop: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn disabled() -> Self {
        Self {
            order: Vec::new(),
            ..Self::default()
        }
    }

    pub fn only(transforms: &[Transform]) -> Self {
        Self {
            order: transforms.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("shift_short_prob", self.shift_short_prob),
            ("swap_prob", self.swap_prob),
            ("steal_prob", self.steal_prob),
            ("drop_prob", self.drop_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.shift_short_max >= 0.0 && self.shift_short_max < self.shift_long_max) {
            return Err(Error::Config(
                "need 0 <= shift_short_max < shift_long_max".into(),
            ));
        }
        if !(self.steal_radius > 0.0) {
            return Err(Error::Config("steal_radius must be positive".into()));
        }
        for (i, t) in self.order.iter().enumerate() {
            if self.order[..i].contains(t) {
                return Err(Error::Config(format!("transform {t:?} listed twice")));
            }
        }
        Ok(())
    }

    fn forced_indices(&self, schema: &JointSchema) -> Result<Vec<usize>> {
        self.forced_drop
            .iter()
            .map(|name| {
                schema
                    .index_of(name)
                    .ok_or_else(|| Error::Config(format!("forced_drop: unknown joint {name:?}")))
            })
            .collect()
    }
}

/// Length of one T1 displacement from its two draws.
fn shift_length(cfg: &SynthConfig, branch: f64, frac: f64) -> f64 {
    if branch < cfg.shift_short_prob {
        frac * cfg.shift_short_max
    } else {
        // (short_max, long_max], disjoint from the short branch
        cfg.shift_long_max - frac * (cfg.shift_long_max - cfg.shift_short_max)
    }
}

/// Draws per present joint, in order: branch, length fraction, angle fraction.
pub fn t1_shift_with(pose: &Pose, cfg: &SynthConfig, src: &mut impl UniformSource) -> Pose {
    let mut out = pose.clone();
    for k in out.joints.iter_mut().filter(|k| k.present) {
        let branch = src.uniform();
        let frac = src.uniform();
        let angle = src.uniform() * TAU;
        let len = shift_length(cfg, branch, frac);
        k.x += len * angle.cos();
        k.y += len * angle.sin();
    }
    out
}

pub fn t1_shift(pose: &Pose, cfg: &SynthConfig, rng: &RngKey) -> Pose {
    t1_shift_with(pose, cfg, &mut rng.stream(StreamTag::Shift))
}

/// One draw per flip pair.
pub fn t2_swap_with(
    pose: &Pose,
    schema: &JointSchema,
    cfg: &SynthConfig,
    src: &mut impl UniformSource,
) -> Pose {
    let mut out = pose.clone();
    for &(a, b) in schema.flip_pairs() {
        if src.uniform() < cfg.swap_prob {
            out.joints.swap(a, b);
        }
    }
    out
}

pub fn t2_swap(pose: &Pose, schema: &JointSchema, cfg: &SynthConfig, rng: &RngKey) -> Pose {
    t2_swap_with(pose, schema, cfg, &mut rng.stream(StreamTag::Swap))
}

/// Per present joint: one draw for the steal decision and, when it fires
/// and candidates exist, one draw picking the candidate.
pub fn t3_steal_with(
    pose: &Pose,
    neighbors: &[Pose],
    schema: &JointSchema,
    cfg: &SynthConfig,
    src: &mut impl UniformSource,
) -> Pose {
    let mut out = pose.clone();
    if neighbors.is_empty() {
        return out;
    }
    for j in 0..out.joints.len() {
        let Some(here) = out.joints[j].position() else {
            continue;
        };
        if src.uniform() >= cfg.steal_prob {
            continue;
        }
        let types = [Some(j), schema.flip_partner(j)];
        let candidates: Vec<_> = neighbors
            .iter()
            .flat_map(|nb| types.iter().flatten().filter_map(|&t| nb.joints[t].position()))
            .filter(|p| p.dist(here) <= cfg.steal_radius)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let pick = candidates[src.index(candidates.len())];
        out.joints[j].x = pick.x;
        out.joints[j].y = pick.y;
    }
    out
}

pub fn t3_steal(
    pose: &Pose,
    neighbors: &[Pose],
    schema: &JointSchema,
    cfg: &SynthConfig,
    rng: &RngKey,
) -> Pose {
    t3_steal_with(pose, neighbors, schema, cfg, &mut rng.stream(StreamTag::Steal))
}

/// One draw per present joint; joints listed in `forced` are always removed.
pub fn t4_drop_with(
    pose: &Pose,
    drop_prob: f64,
    forced: &[usize],
    src: &mut impl UniformSource,
) -> Pose {
    let mut out = pose.clone();
    for (j, k) in out.joints.iter_mut().enumerate() {
        if !k.present {
            continue;
        }
        let drop = src.uniform() < drop_prob;
        if drop || forced.contains(&j) {
            k.present = false;
        }
    }
    out
}

pub fn t4_drop(pose: &Pose, cfg: &SynthConfig, rng: &RngKey) -> Pose {
    t4_drop_with(pose, cfg.drop_prob, &[], &mut rng.stream(StreamTag::Drop))
}

/// Applies the configured transforms to a copy of `gt`. T3 candidates come
/// from the uncorrupted `neighbors`.
pub fn synthesize_input(
    gt: &Pose,
    neighbors: &[Pose],
    schema: &JointSchema,
    cfg: &SynthConfig,
    rng: &RngKey,
) -> Result<Pose> {
    let forced = cfg.forced_indices(schema)?;
    let mut pose = gt.clone();
    for t in &cfg.order {
        pose = match t {
            Transform::T1 => t1_shift(&pose, cfg, rng),
            Transform::T2 => t2_swap(&pose, schema, cfg, rng),
            Transform::T3 => t3_steal(&pose, neighbors, schema, cfg, rng),
            Transform::T4 => {
                t4_drop_with(&pose, cfg.drop_prob, &forced, &mut rng.stream(StreamTag::Drop))
            }
        };
    }
    if !cfg.order.contains(&Transform::T4) {
        for &j in &forced {
            pose.joints[j].present = false;
        }
    }
    Ok(pose)
}

/// Key for person `person` of `frame`. Frames without a sequence id are
/// labelled by their image reference.
pub fn frame_key(seed: u64, frame: &FrameAnnotation, person: usize) -> RngKey {
    let label = frame.sequence_id.clone().unwrap_or_else(|| frame.image.clone());
    RngKey::new(seed, label, frame.frame_index, person as u64)
}

/// Corrupts every pose of a frame; the other people of the frame act as
/// neighbors.
pub fn synthesize_frame(
    frame: &FrameAnnotation,
    schema: &JointSchema,
    cfg: &SynthConfig,
    seed: u64,
) -> Result<FrameAnnotation> {
    let people = frame
        .people
        .iter()
        .enumerate()
        .map(|(i, gt)| {
            let neighbors: Vec<Pose> = frame
                .people
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, p)| p.clone())
                .collect();
            synthesize_input(gt, &neighbors, schema, cfg, &frame_key(seed, frame, i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameAnnotation {
        people,
        ..frame.clone()
    })
}

pub fn synthesize_dataset(ds: &Dataset, cfg: &SynthConfig, seed: u64, jobs: usize) -> Result<Dataset> {
    cfg.validate()?;
    let frames = with_jobs(jobs, || {
        ds.frames
            .par_iter()
            .map(|f| synthesize_frame(f, &ds.schema, cfg, seed))
            .collect::<Result<Vec<_>>>()
    })?;
    Dataset::new(ds.schema.clone(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::ScriptedDraws;
    use crate::types::Keypoint;

    fn schema() -> JointSchema {
        JointSchema::new(
            vec!["top".into(), "l".into(), "r".into(), "bottom".into()],
            vec![(1, 2)],
            Some((0, 3)),
        )
        .unwrap()
    }

    fn pose() -> Pose {
        Pose::new(vec![
            Keypoint::new(10.0, 10.0),
            Keypoint::new(0.0, 50.0),
            Keypoint::new(20.0, 50.0),
            Keypoint::absent(),
        ])
    }

    #[test]
    fn zero_length_shift_is_identity() {
        let cfg = SynthConfig {
            shift_short_max: 0.0,
            shift_long_max: 1e-300,
            shift_short_prob: 1.0,
            ..SynthConfig::default()
        };
        let p = pose();
        assert_eq!(t1_shift(&p, &cfg, &RngKey::from_seed(5)), p);
    }

    #[test]
    fn forced_shift_moves_along_x() {
        let p = Pose::new(vec![Keypoint::new(1.0, 2.0)]);
        let out = t1_shift_with(&p, &SynthConfig::default(), &mut ScriptedDraws::new([0.5, 0.5, 0.0]));
        assert_eq!(out.joints[0], Keypoint::new(13.5, 2.0));
    }

    #[test]
    fn forced_long_shift_lies_in_long_range() {
        let p = Pose::new(vec![Keypoint::new(0.0, 0.0)]);
        let cfg = SynthConfig::default();
        let out = t1_shift_with(&p, &cfg, &mut ScriptedDraws::new([0.95, 0.0, 0.25]));
        let k = out.joints[0];
        assert!(k.x.abs() < 1e-9 && (k.y - 125.0).abs() < 1e-9, "{k:?}");
    }

    #[test]
    fn swap_extremes() {
        let s = schema();
        let p = pose();
        let always = SynthConfig {
            swap_prob: 1.0,
            ..SynthConfig::default()
        };
        let key = RngKey::from_seed(1);
        let once = t2_swap(&p, &s, &always, &key);
        assert_eq!(once.joints[1], p.joints[2]);
        assert_eq!(t2_swap(&once, &s, &always, &key), p);
        let never = SynthConfig {
            swap_prob: 0.0,
            ..SynthConfig::default()
        };
        assert_eq!(t2_swap(&p, &s, &never, &key), p);
    }

    #[test]
    fn steal_without_neighbors_is_identity() {
        let cfg = SynthConfig {
            steal_prob: 1.0,
            ..SynthConfig::default()
        };
        let p = pose();
        assert_eq!(t3_steal(&p, &[], &schema(), &cfg, &RngKey::from_seed(3)), p);
    }

    #[test]
    fn steal_takes_single_candidate() {
        let cfg = SynthConfig {
            steal_prob: 1.0,
            ..SynthConfig::default()
        };
        let p = Pose::new(vec![
            Keypoint::new(100.0, 100.0),
            Keypoint::absent(),
            Keypoint::absent(),
            Keypoint::absent(),
        ]);
        let mut nb = Pose::all_absent(4);
        nb.joints[0] = Keypoint::new(110.0, 100.0);
        let out = t3_steal(&p, &[nb], &schema(), &cfg, &RngKey::from_seed(3));
        assert_eq!(out.joints[0].point(), Keypoint::new(110.0, 100.0).point());
    }

    #[test]
    fn steal_uses_symmetric_type() {
        let cfg = SynthConfig {
            steal_prob: 1.0,
            ..SynthConfig::default()
        };
        let mut p = Pose::all_absent(4);
        p.joints[1] = Keypoint::new(0.0, 0.0);
        let mut nb = Pose::all_absent(4);
        nb.joints[2] = Keypoint::new(30.0, 40.0);
        let out = t3_steal(&p, &[nb], &schema(), &cfg, &RngKey::from_seed(9));
        assert_eq!(out.joints[1].point(), Keypoint::new(30.0, 40.0).point());
    }

    #[test]
    fn steal_respects_radius() {
        let cfg = SynthConfig {
            steal_prob: 1.0,
            ..SynthConfig::default()
        };
        let mut p = Pose::all_absent(4);
        p.joints[0] = Keypoint::new(0.0, 0.0);
        let mut nb = Pose::all_absent(4);
        nb.joints[0] = Keypoint::new(76.0, 0.0);
        for seed in 0..10_000 {
            let out = t3_steal(&p, std::slice::from_ref(&nb), &schema(), &cfg, &RngKey::from_seed(seed));
            assert_eq!(out, p);
        }
    }

    #[test]
    fn drop_extremes() {
        let p = pose();
        let key = RngKey::from_seed(0);
        let none = SynthConfig {
            drop_prob: 0.0,
            ..SynthConfig::default()
        };
        assert_eq!(t4_drop(&p, &none, &key), p);
        let all = SynthConfig {
            drop_prob: 1.0,
            ..SynthConfig::default()
        };
        assert_eq!(t4_drop(&p, &all, &key).present_count(), 0);
    }

    #[test]
    fn disabled_pipeline_is_identity() {
        let p = pose();
        let out = synthesize_input(&p, &[pose()], &schema(), &SynthConfig::disabled(), &RngKey::from_seed(1)).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn forced_drop_removes_named_joint() {
        let cfg = SynthConfig {
            forced_drop: vec!["top".into()],
            ..SynthConfig::disabled()
        };
        let out = synthesize_input(&pose(), &[], &schema(), &cfg, &RngKey::from_seed(1)).unwrap();
        assert!(!out.joints[0].present);
        assert_eq!(out.present_count(), 2);
        let bad = SynthConfig {
            forced_drop: vec!["nope".into()],
            ..SynthConfig::default()
        };
        assert!(synthesize_input(&pose(), &[], &schema(), &bad, &RngKey::from_seed(1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = SynthConfig {
            drop_prob: 1.5,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            shift_short_max: 130.0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn only_t4_can_reduce_present_count() {
        let s = schema();
        let cfg = SynthConfig {
            steal_prob: 1.0,
            swap_prob: 0.5,
            ..SynthConfig::default()
        };
        let mut nb = pose();
        nb.joints[3] = Keypoint::new(12.0, 12.0);
        for seed in 0..200 {
            let key = RngKey::from_seed(seed);
            let p = pose();
            let a = t1_shift(&p, &cfg, &key);
            let b = t2_swap(&a, &s, &cfg, &key);
            let c = t3_steal(&b, std::slice::from_ref(&nb), &s, &cfg, &key);
            assert_eq!(a.present_count(), 3);
            assert_eq!(b.present_count(), 3);
            assert_eq!(c.present_count(), 3);
            let d = synthesize_input(&p, std::slice::from_ref(&nb), &s, &cfg, &key).unwrap();
            assert!(d.present_count() <= 3);
            // a joint absent in the ground truth stays absent after T1..T3
            assert!(!a.joints[3].present);
        }
    }
}
