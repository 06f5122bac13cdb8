//! Multi-person average precision with greedy pose assignment.

use super::{check_frames, check_schema, head_norm, Counts, MetricReport};
use crate::error::{Error, Result};
use crate::types::{FrameAnnotation, JointSchema, Pose};

/// Fraction of the ground-truth joints that `pred` hits within `thr`.
pub fn pose_similarity(pred: &Pose, gt: &Pose, thr: f64) -> f64 {
    let mut total = 0;
    let mut hit = 0;
    for (p, g) in pred.joints.iter().zip(&gt.joints) {
        let Some(g) = g.position() else { continue };
        total += 1;
        if p.position().is_some_and(|p| p.dist(g) <= thr) {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// All-points interpolated average precision of detections `(score, tp)`
/// against `positives` ground-truth items. Ties in score keep input order.
pub fn average_precision(dets: &[(f64, bool)], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].0.total_cmp(&dets[a].0));
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(dets.len());
    let mut recall = Vec::with_capacity(dets.len());
    for (k, &i) in order.iter().enumerate() {
        if dets[i].1 {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / positives as f64);
    }
    // precision envelope
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        if *r > prev {
            ap += (r - prev) * p;
            prev = *r;
        }
    }
    ap
}

/// Greedy matching: repeatedly the pair with the highest positive
/// similarity, ties to the lower ground-truth then prediction index.
/// Returns `match_of_pred`.
fn greedy_assign(sim: &[Vec<f64>], npred: usize) -> Vec<Option<usize>> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (g, row) in sim.iter().enumerate() {
        for (p, &s) in row.iter().enumerate() {
            if s > 0.0 {
                pairs.push((g, p));
            }
        }
    }
    pairs.sort_by(|a, b| sim[b.0][b.1].total_cmp(&sim[a.0][a.1]).then(a.cmp(b)));
    let mut of_pred = vec![None; npred];
    let mut gt_used = vec![false; sim.len()];
    for (g, p) in pairs {
        if !gt_used[g] && of_pred[p].is_none() {
            gt_used[g] = true;
            of_pred[p] = Some(g);
        }
    }
    of_pred
}

/// mAP over frames; `preds[i]` and `gts[i]` describe the same image.
pub fn map_eval(preds: &[FrameAnnotation], gts: &[FrameAnnotation], schema: &JointSchema, r: f64) -> Result<MetricReport> {
    check_frames(preds, gts)?;
    let n = schema.len();
    let mut dets: Vec<Vec<(f64, bool)>> = vec![Vec::new(); n];
    let mut counts = vec![Counts::default(); n];
    let mut skipped = 0;
    for (fi, (pf, gf)) in preds.iter().zip(gts).enumerate() {
        check_schema(&pf.people.iter().chain(&gf.people).collect::<Vec<_>>(), schema)?;
        let valid: Vec<(&Pose, f64)> = gf
            .people
            .iter()
            .filter_map(|g| match head_norm(g, schema) {
                Ok(h) => Some((g, r * h)),
                Err(_) => {
                    skipped += 1;
                    None
                }
            })
            .collect();
        let sim: Vec<Vec<f64>> = valid
            .iter()
            .map(|&(g, thr)| pf.people.iter().map(|p| pose_similarity(p, g, thr)).collect())
            .collect();
        let of_pred = greedy_assign(&sim, pf.people.len());
        let mut gt_hit = vec![vec![false; n]; valid.len()];
        for (pi, pred) in pf.people.iter().enumerate() {
            for (j, k) in pred.joints.iter().enumerate() {
                let Some(p) = k.position() else { continue };
                let score = k.score.ok_or(Error::MissingScore {
                    frame: fi,
                    person: pi,
                    joint: j,
                })?;
                let tp = of_pred[pi].is_some_and(|g| {
                    let (gt, thr) = valid[g];
                    gt.joints[j].position().is_some_and(|q| p.dist(q) <= thr)
                });
                if tp {
                    gt_hit[of_pred[pi].expect("matched")][j] = true;
                    counts[j].tp += 1;
                } else {
                    counts[j].fp += 1;
                }
                dets[j].push((score, tp));
            }
        }
        for (g, &(gt, _)) in valid.iter().enumerate() {
            for j in 0..n {
                if gt.joints[j].present {
                    counts[j].gt += 1;
                    if !gt_hit[g][j] {
                        counts[j].fn_ += 1;
                    }
                }
            }
        }
    }
    let values = (0..n)
        .map(|j| (counts[j].gt > 0).then(|| 100.0 * average_precision(&dets[j], counts[j].gt)))
        .collect();
    Ok(MetricReport::assemble("map", vec![r], schema, values, counts, skipped))
}
