use super::{head_norm, Counts, MetricReport};
use crate::error::{Error, Result};
use crate::types::{JointSchema, Pose};

/// Per joint: correct-joint counts and ground-truth counts at ratio `r`.
fn tally(preds: &[Pose], gts: &[Pose], schema: &JointSchema, r: f64) -> (Vec<usize>, Vec<usize>, usize) {
    let n = schema.len();
    let mut correct = vec![0; n];
    let mut total = vec![0; n];
    let mut skipped = 0;
    for (pred, gt) in preds.iter().zip(gts) {
        let Ok(h) = head_norm(gt, schema) else {
            skipped += 1;
            continue;
        };
        for j in 0..n {
            let Some(g) = gt.joints[j].position() else { continue };
            total[j] += 1;
            if let Some(p) = pred.joints[j].position() {
                if p.dist(g) <= r * h {
                    correct[j] += 1;
                }
            }
        }
    }
    (correct, total, skipped)
}

fn check(preds: &[Pose], gts: &[Pose], schema: &JointSchema) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} ground-truth poses",
            preds.len(),
            gts.len()
        )));
    }
    for p in preds.iter().chain(gts) {
        p.validate(schema)?;
    }
    Ok(())
}

/// Single-person PCKh at ratio `r`: `preds[i]` is the prediction for
/// `gts[i]`.
pub fn pckh(preds: &[Pose], gts: &[Pose], schema: &JointSchema, r: f64) -> Result<MetricReport> {
    check(preds, gts, schema)?;
    let (correct, total, skipped) = tally(preds, gts, schema, r);
    let values = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| (t > 0).then(|| 100.0 * c as f64 / t as f64))
        .collect();
    let counts = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| Counts {
            gt: t,
            tp: c,
            fn_: t - c,
            ..Counts::default()
        })
        .collect();
    Ok(MetricReport::assemble("pckh", vec![r], schema, values, counts, skipped))
}

/// `0.00, 0.01, ..., 0.50`.
pub fn auc_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 100.0).collect()
}

/// Mean PCKh over [`auc_thresholds`]; per-joint values are the per-joint
/// means over the same grid.
pub fn auc(preds: &[Pose], gts: &[Pose], schema: &JointSchema) -> Result<MetricReport> {
    check(preds, gts, schema)?;
    let grid = auc_thresholds();
    let n = schema.len();
    let mut sums = vec![0.0; n];
    let mut total = vec![0; n];
    let mut skipped = 0;
    for &r in &grid {
        let (c, t, s) = tally(preds, gts, schema, r);
        for j in 0..n {
            if t[j] > 0 {
                sums[j] += 100.0 * c[j] as f64 / t[j] as f64;
            }
        }
        total = t;
        skipped = s;
    }
    let values = sums
        .iter()
        .zip(&total)
        .map(|(&s, &t)| (t > 0).then(|| s / grid.len() as f64))
        .collect();
    let counts = total
        .iter()
        .map(|&t| Counts {
            gt: t,
            ..Counts::default()
        })
        .collect();
    Ok(MetricReport::assemble("auc", grid, schema, values, counts, skipped))
}
