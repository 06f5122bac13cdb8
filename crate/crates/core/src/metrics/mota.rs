//! Per-joint multiple object tracking accuracy.

use std::collections::{BTreeMap, HashMap};

use super::{check_frames, check_schema, head_norm, Counts, MetricReport};
use crate::error::{Error, Result};
use crate::types::{FrameAnnotation, JointSchema, Point};

/// Frame positions grouped by sequence (falling back to the image
/// reference), each sorted by frame index.
fn sequences(frames: &[FrameAnnotation]) -> Vec<Vec<usize>> {
    let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, f) in frames.iter().enumerate() {
        by.entry(f.sequence_id.as_deref().unwrap_or(&f.image)).or_default().push(i);
    }
    by.into_values()
        .map(|mut v| {
            v.sort_by_key(|&i| frames[i].frame_index);
            v
        })
        .collect()
}

struct GtJoint {
    track: u64,
    at: Point,
    thr: f64,
}

struct PredJoint {
    track: u64,
    at: Point,
}

/// Matches one frame of one joint type. `last` maps ground-truth tracks to
/// the prediction track they were last matched with. Returns the counts.
fn match_frame(gts: &[GtJoint], preds: &[PredJoint], last: &mut HashMap<u64, u64>) -> Counts {
    let mut gt_match: Vec<Option<usize>> = vec![None; gts.len()];
    let mut pred_used = vec![false; preds.len()];
    // continue previous pairings that are still within reach
    for (g, gt) in gts.iter().enumerate() {
        let Some(&t) = last.get(&gt.track) else { continue };
        if let Some(p) = (0..preds.len()).find(|&p| !pred_used[p] && preds[p].track == t && preds[p].at.dist(gt.at) <= gt.thr) {
            gt_match[g] = Some(p);
            pred_used[p] = true;
        }
    }
    let mut pairs = Vec::new();
    for (g, gt) in gts.iter().enumerate() {
        if gt_match[g].is_some() {
            continue;
        }
        for (p, pr) in preds.iter().enumerate() {
            if pred_used[p] {
                continue;
            }
            let d = pr.at.dist(gt.at);
            if d <= gt.thr {
                pairs.push((d, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    for (_, g, p) in pairs {
        if gt_match[g].is_none() && !pred_used[p] {
            gt_match[g] = Some(p);
            pred_used[p] = true;
        }
    }
    let mut c = Counts {
        gt: gts.len(),
        ..Counts::default()
    };
    for (g, m) in gt_match.iter().enumerate() {
        match m {
            Some(p) => {
                c.tp += 1;
                let t = preds[*p].track;
                if last.get(&gts[g].track).is_some_and(|&prev| prev != t) {
                    c.idsw += 1;
                }
                last.insert(gts[g].track, t);
            }
            None => c.fn_ += 1,
        }
    }
    c.fp = pred_used.iter().filter(|u| !**u).count();
    c
}

/// MOTA per joint type over all sequences; `preds[i]` and `gts[i]` describe
/// the same frame. Ground truth and predictions must carry track ids.
/// Per-joint values are `100 * (1 - (FN + FP + IDSW) / GT)`.
pub fn mota_eval(preds: &[FrameAnnotation], gts: &[FrameAnnotation], schema: &JointSchema, r: f64) -> Result<MetricReport> {
    check_frames(preds, gts)?;
    for (fi, (pf, gf)) in preds.iter().zip(gts).enumerate() {
        check_schema(&pf.people.iter().chain(&gf.people).collect::<Vec<_>>(), schema)?;
        for (pi, p) in pf.people.iter().chain(&gf.people).enumerate() {
            if p.track_id.is_none() {
                return Err(Error::MissingTrackId { frame: fi, person: pi });
            }
        }
    }
    let n = schema.len();
    let mut counts = vec![Counts::default(); n];
    let mut skipped = 0;
    for seq in sequences(gts) {
        let mut last: Vec<HashMap<u64, u64>> = vec![HashMap::new(); n];
        for &fi in &seq {
            let valid: Vec<(u64, &crate::types::Pose, f64)> = gts[fi]
                .people
                .iter()
                .filter_map(|g| match head_norm(g, schema) {
                    Ok(h) => Some((g.track_id.expect("checked"), g, r * h)),
                    Err(_) => {
                        skipped += 1;
                        None
                    }
                })
                .collect();
            for j in 0..n {
                let gj: Vec<GtJoint> = valid
                    .iter()
                    .filter_map(|&(track, g, thr)| g.joints[j].position().map(|at| GtJoint { track, at, thr }))
                    .collect();
                let pj: Vec<PredJoint> = preds[fi]
                    .people
                    .iter()
                    .filter_map(|p| {
                        p.joints[j].position().map(|at| PredJoint {
                            track: p.track_id.expect("checked"),
                            at,
                        })
                    })
                    .collect();
                counts[j] += match_frame(&gj, &pj, &mut last[j]);
            }
        }
    }
    let values = counts
        .iter()
        .map(|c| {
            (c.gt > 0).then(|| 100.0 * (1.0 - (c.fn_ + c.fp + c.idsw) as f64 / c.gt as f64))
        })
        .collect();
    Ok(MetricReport::assemble("mota", vec![r], schema, values, counts, skipped))
}
