//! Independent reference implementations and random instance generators
//! shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use poserefine::datasets::{builtin_schema, Dataset};
use poserefine::net::{loss_and_output_grad, LossWeights, RefinerNet, TargetView};
use poserefine::tensor::Tensor3;
use poserefine::{FrameAnnotation, JointSchema, Keypoint, Pose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn schema15() -> JointSchema {
    builtin_schema("posetrack15").unwrap()
}

fn d(a: &Keypoint, b: &Keypoint) -> f64 {
    ((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y)).sqrt()
}

fn head(gt: &Pose, schema: &JointSchema) -> Option<f64> {
    let (t, b) = schema.head_pair()?;
    if gt.joints[t].present && gt.joints[b].present {
        Some(d(&gt.joints[t], &gt.joints[b]))
    } else {
        None
    }
}

// ---------------------------------------------------------------- random data

/// Ground-truth pose with head segment; some non-head joints absent.
pub fn random_gt(r: &mut ChaCha8Rng, schema: &JointSchema, track: u64) -> Pose {
    let cx = r.random_range(50.0..450.0);
    let cy = r.random_range(50.0..350.0);
    let s = r.random_range(20.0..80.0);
    let (t, b) = schema.head_pair().unwrap();
    let joints = (0..schema.len())
        .map(|j| {
            if j != t && j != b && r.random_bool(0.15) {
                Keypoint::absent()
            } else {
                Keypoint::new(cx + r.random_range(-s..s), cy + r.random_range(-s..s))
            }
        })
        .collect();
    let mut p = Pose::new(joints);
    p.track_id = Some(track);
    p
}

/// Noisy copy of `gt` at a random noise level, with drops and scores.
pub fn noisy_copy(r: &mut ChaCha8Rng, gt: &Pose, track: u64) -> Pose {
    let level = [0.0, 3.0, 8.0, 20.0][r.random_range(0..4)];
    let mut p = gt.clone();
    for k in &mut p.joints {
        if r.random_bool(0.1) {
            k.present = false;
        }
        if !k.present && r.random_bool(0.1) {
            *k = Keypoint::new(r.random_range(0.0..500.0), r.random_range(0.0..400.0));
        }
        k.x += r.random_range(-1.0..1.0) * level;
        k.y += r.random_range(-1.0..1.0) * level;
        k.score = Some(r.random_range(0.0..1.0));
    }
    p.track_id = Some(track);
    p
}

/// Random multi-frame instance: ground-truth frames of one sequence and
/// matching prediction frames with shuffled, noisy, missing and spurious
/// people.
pub fn random_instance(r: &mut ChaCha8Rng, schema: &JointSchema) -> (Vec<FrameAnnotation>, Vec<FrameAnnotation>) {
    let frames = r.random_range(1..=4);
    let people = r.random_range(1..=5);
    let mut base: Vec<Pose> = (0..people).map(|i| random_gt(r, schema, i as u64 + 1)).collect();
    let mut track_map: Vec<u64> = (0..people as u64).map(|i| 100 + i).collect();
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for f in 0..frames {
        for p in &mut base {
            for k in &mut p.joints {
                k.x += r.random_range(-4.0..4.0);
                k.y += r.random_range(-4.0..4.0);
            }
        }
        if r.random_bool(0.3) && people > 1 {
            let a = r.random_range(0..people);
            let b = r.random_range(0..people);
            track_map.swap(a, b);
        }
        let mut pp: Vec<Pose> = Vec::new();
        for (i, g) in base.iter().enumerate() {
            if r.random_bool(0.85) {
                pp.push(noisy_copy(r, g, track_map[i]));
            }
        }
        if pp.len() < 5 && r.random_bool(0.3) {
            let mut spurious = random_gt(r, schema, 0);
            for k in &mut spurious.joints {
                k.score = Some(r.random_range(0.0..1.0));
            }
            spurious.track_id = Some(900 + f as u64);
            pp.push(spurious);
        }
        for i in (1..pp.len()).rev() {
            let j = r.random_range(0..=i);
            pp.swap(i, j);
        }
        let mut gt_people = base.clone();
        if r.random_bool(0.1) {
            // a ground-truth pose without head segment
            let (t, _) = schema.head_pair().unwrap();
            gt_people[0].joints[t].present = false;
        }
        gts.push(FrameAnnotation {
            image: format!("f{f}.png"),
            sequence_id: Some("s".into()),
            frame_index: f as u64,
            people: gt_people,
        });
        preds.push(FrameAnnotation {
            image: format!("f{f}.png"),
            sequence_id: Some("s".into()),
            frame_index: f as u64,
            people: pp,
        });
    }
    (gts, preds)
}

pub fn dataset(schema: &JointSchema, frames: Vec<FrameAnnotation>) -> Dataset {
    Dataset::new(schema.clone(), frames).unwrap()
}

// ---------------------------------------------------------------- PCKh / AUC

/// Per-joint PCKh (percent) and its mean, as a plain loop.
pub fn oracle_pckh(preds: &[Pose], gts: &[Pose], schema: &JointSchema, r: f64) -> (Vec<Option<f64>>, f64) {
    let n = schema.len();
    let mut out = Vec::new();
    for j in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..gts.len() {
            let Some(h) = head(&gts[i], schema) else { continue };
            if !gts[i].joints[j].present {
                continue;
            }
            den += 1.0;
            if preds[i].joints[j].present && d(&preds[i].joints[j], &gts[i].joints[j]) <= r * h {
                num += 1.0;
            }
        }
        out.push(if den > 0.0 { Some(100.0 * num / den) } else { None });
    }
    let defined: Vec<f64> = out.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<f64>() / defined.len().max(1) as f64;
    (out, mean)
}

pub fn oracle_auc(preds: &[Pose], gts: &[Pose], schema: &JointSchema) -> f64 {
    let mut s = 0.0;
    for i in 0..=50 {
        s += oracle_pckh(preds, gts, schema, i as f64 * 0.01).1;
    }
    s / 51.0
}

// ---------------------------------------------------------------- matchings

/// Every injective partial matching between `a` items and `b` items using
/// only allowed edges.
pub fn all_matchings(a: usize, b: usize, allowed: &dyn Fn(usize, usize) -> bool) -> Vec<Vec<(usize, usize)>> {
    fn rec(i: usize, a: usize, b: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>, allowed: &dyn Fn(usize, usize) -> bool) {
        if i == a {
            out.push(cur.clone());
            return;
        }
        rec(i + 1, a, b, used, cur, out, allowed);
        for j in 0..b {
            if !used[j] && allowed(i, j) {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, a, b, used, cur, out, allowed);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, a, b, &mut vec![false; b], &mut Vec::new(), &mut out, allowed);
    out
}

/// Chooses the matching whose edges, sorted by `key`, form the
/// lexicographically smallest sequence; a longer sequence wins over its own
/// prefix.
pub fn lex_best<K: PartialOrd + Copy>(matchings: Vec<Vec<(usize, usize)>>, key: &dyn Fn(usize, usize) -> K) -> Vec<(usize, usize)> {
    let keyed = |m: &Vec<(usize, usize)>| {
        let mut ks: Vec<K> = m.iter().map(|&(a, b)| key(a, b)).collect();
        ks.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ks
    };
    let better = |x: &Vec<K>, y: &Vec<K>| {
        for (a, b) in x.iter().zip(y) {
            if a < b {
                return true;
            }
            if a > b {
                return false;
            }
        }
        x.len() > y.len()
    };
    let mut best = matchings[0].clone();
    let mut best_k = keyed(&best);
    for m in matchings.into_iter().skip(1) {
        let k = keyed(&m);
        if better(&k, &best_k) {
            best = m;
            best_k = k;
        }
    }
    best
}

// ---------------------------------------------------------------- mAP

pub struct MapOracle {
    pub per_joint: Vec<Option<f64>>,
    pub mean: f64,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub gt: Vec<usize>,
}

fn interpolated_ap(dets: &[(f64, bool)], positives: usize) -> f64 {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    // stable: equal scores keep collection order
    idx.sort_by(|&a, &b| dets[b].0.partial_cmp(&dets[a].0).unwrap());
    let ranked: Vec<bool> = idx.iter().map(|&i| dets[i].1).collect();
    let prec = |k: usize| ranked[..=k].iter().filter(|t| **t).count() as f64 / (k + 1) as f64;
    let mut ap = 0.0;
    for k in 0..ranked.len() {
        if ranked[k] {
            let best = (k..ranked.len()).map(prec).fold(0.0, f64::max);
            ap += best / positives as f64;
        }
    }
    ap
}

pub fn oracle_map(preds: &[FrameAnnotation], gts: &[FrameAnnotation], schema: &JointSchema, r: f64) -> MapOracle {
    let n = schema.len();
    let mut dets = vec![Vec::new(); n];
    let mut tp = vec![0; n];
    let mut fp = vec![0; n];
    let mut gt_count = vec![0; n];
    for (pf, gf) in preds.iter().zip(gts) {
        let valid: Vec<(&Pose, f64)> = gf.people.iter().filter_map(|g| head(g, schema).map(|h| (g, r * h))).collect();
        let sim = |g: usize, p: usize| {
            let (gt, thr) = valid[g];
            let pred = &pf.people[p];
            let mut tot = 0.0;
            let mut hit = 0.0;
            for j in 0..n {
                if gt.joints[j].present {
                    tot += 1.0;
                    if pred.joints[j].present && d(&pred.joints[j], &gt.joints[j]) <= thr {
                        hit += 1.0;
                    }
                }
            }
            if tot > 0.0 {
                hit / tot
            } else {
                0.0
            }
        };
        let ms = all_matchings(valid.len(), pf.people.len(), &|g, p| sim(g, p) > 0.0);
        let best = lex_best(ms, &|g, p| (-sim(g, p), g, p));
        let owner: HashMap<usize, usize> = best.iter().map(|&(g, p)| (p, g)).collect();
        for (pi, pred) in pf.people.iter().enumerate() {
            for j in 0..n {
                let k = &pred.joints[j];
                if !k.present {
                    continue;
                }
                let hit = owner.get(&pi).is_some_and(|&g| {
                    let (gt, thr) = valid[g];
                    gt.joints[j].present && d(k, &gt.joints[j]) <= thr
                });
                if hit {
                    tp[j] += 1;
                } else {
                    fp[j] += 1;
                }
                dets[j].push((k.score.unwrap(), hit));
            }
        }
        for (gt, _) in &valid {
            for j in 0..n {
                if gt.joints[j].present {
                    gt_count[j] += 1;
                }
            }
        }
    }
    let per_joint: Vec<Option<f64>> = (0..n)
        .map(|j| (gt_count[j] > 0).then(|| 100.0 * interpolated_ap(&dets[j], gt_count[j])))
        .collect();
    let defined: Vec<f64> = per_joint.iter().flatten().copied().collect();
    MapOracle {
        mean: defined.iter().sum::<f64>() / defined.len().max(1) as f64,
        per_joint,
        tp,
        fp,
        gt: gt_count,
    }
}

// ---------------------------------------------------------------- MOTA

#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct MotaCounts {
    pub gt: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
}

/// Per-joint counts and MOTA values (percent). Continuations of previous
/// pairings are fixed first; the remaining pairs are the matching with the
/// lexicographically smallest sorted distances.
pub fn oracle_mota(preds: &[FrameAnnotation], gts: &[FrameAnnotation], schema: &JointSchema, r: f64) -> (Vec<MotaCounts>, Vec<Option<f64>>, f64) {
    let n = schema.len();
    let mut counts = vec![MotaCounts::default(); n];
    for j in 0..n {
        let mut last: HashMap<u64, u64> = HashMap::new();
        let mut order: Vec<usize> = (0..gts.len()).collect();
        order.sort_by_key(|&i| gts[i].frame_index);
        for fi in order {
            let g: Vec<(u64, &Keypoint, f64)> = gts[fi]
                .people
                .iter()
                .filter_map(|p| head(p, schema).map(|h| (p, h)))
                .filter(|(p, _)| p.joints[j].present)
                .map(|(p, h)| (p.track_id.unwrap(), &p.joints[j], r * h))
                .collect();
            let pr: Vec<(u64, &Keypoint)> = preds[fi]
                .people
                .iter()
                .filter(|p| p.joints[j].present)
                .map(|p| (p.track_id.unwrap(), &p.joints[j]))
                .collect();
            let mut fixed: Vec<(usize, usize)> = Vec::new();
            for (gi, (track, k, thr)) in g.iter().enumerate() {
                if let Some(t) = last.get(track) {
                    if let Some(pi) = (0..pr.len()).find(|&pi| !fixed.iter().any(|f| f.1 == pi) && pr[pi].0 == *t && d(pr[pi].1, k) <= *thr) {
                        fixed.push((gi, pi));
                    }
                }
            }
            let free_g: Vec<usize> = (0..g.len()).filter(|gi| !fixed.iter().any(|f| f.0 == *gi)).collect();
            let free_p: Vec<usize> = (0..pr.len()).filter(|pi| !fixed.iter().any(|f| f.1 == *pi)).collect();
            let dist = |a: usize, b: usize| d(pr[free_p[b]].1, g[free_g[a]].1);
            let ms = all_matchings(free_g.len(), free_p.len(), &|a, b| dist(a, b) <= g[free_g[a]].2);
            let best = lex_best(ms, &|a, b| (dist(a, b), free_g[a], free_p[b]));
            let mut all = fixed.clone();
            all.extend(best.iter().map(|&(a, b)| (free_g[a], free_p[b])));
            let c = &mut counts[j];
            c.gt += g.len();
            c.fn_ += g.len() - all.len();
            c.fp += pr.len() - all.len();
            for (gi, pi) in all {
                let t = pr[pi].0;
                if let Some(prev) = last.insert(g[gi].0, t) {
                    if prev != t {
                        c.idsw += 1;
                    }
                }
            }
        }
    }
    let values: Vec<Option<f64>> = counts
        .iter()
        .map(|c| (c.gt > 0).then(|| 100.0 * (1.0 - (c.fn_ + c.fp + c.idsw) as f64 / c.gt as f64)))
        .collect();
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let mean = defined.iter().sum::<f64>() / defined.len().max(1) as f64;
    (counts, values, mean)
}

// ---------------------------------------------------------------- gradients

/// Relative error `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Sign pattern of every ReLU pre-activation of the net on `input`.
fn relu_pattern(net: &RefinerNet<f64>, input: &Tensor3<f64>) -> Vec<bool> {
    let mut out = Vec::new();
    let mut x = input.padded_to_multiple(8);
    for layer in net.layers() {
        let (ho, wo) = layer.out_dims(x.height, x.width);
        let k = layer.kernel;
        let w = layer.weights(net.params());
        let b = layer.bias(net.params());
        let mut y = Tensor3::zeros(layer.cout, ho, wo);
        for co in 0..layer.cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..layer.cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * layer.stride + ky) as isize - layer.pad as isize;
                                let ix = (ox * layer.stride + kx) as isize - layer.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < x.height && (ix as usize) < x.width {
                                    acc += w[((co * layer.cin + ci) * k + ky) * k + kx] * x.at(ci, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    if layer.relu {
                        out.push(acc > 0.0);
                        acc = acc.max(0.0);
                    }
                    y.set(co, oy, ox, acc);
                }
            }
        }
        x = y;
    }
    out
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Parameters whose difference stencil crosses a ReLU kink.
    pub excluded: usize,
}

/// Central differences for every parameter of `net` against the analytic
/// gradient. Parameters whose `+-h` perturbation flips any ReLU are skipped
/// (the loss is not differentiable across the kink).
pub fn finite_difference_check(net: &RefinerNet<f64>, input: &Tensor3<f64>, targets: &TargetView<f64>, weights: LossWeights, h: f64) -> GradCheck {
    let mut grads = vec![0.0; net.params().len()];
    net.loss_and_grad(input, targets, weights, &mut grads).unwrap();
    let base = relu_pattern(net, input);
    let mut probe = net.clone();
    let mut res = GradCheck {
        max_rel_err: 0.0,
        checked: 0,
        excluded: 0,
    };
    for i in 0..grads.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let plus_pattern = relu_pattern(&probe, input);
        let lp = probe.loss(input, targets, weights).unwrap().total;
        probe.params_mut()[i] = orig - h;
        let minus_pattern = relu_pattern(&probe, input);
        let lm = probe.loss(input, targets, weights).unwrap().total;
        probe.params_mut()[i] = orig;
        if plus_pattern != base || minus_pattern != base {
            res.excluded += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        res.max_rel_err = res.max_rel_err.max(rel_err(grads[i], numeric));
        res.checked += 1;
    }
    res
}

/// Plain-loop reference of the training loss.
pub fn oracle_loss(heat_logits: &Tensor3<f64>, offsets: &Tensor3<f64>, t: &TargetView<f64>, w: LossWeights, stride: f64) -> (f64, f64) {
    let mut bce = 0.0;
    let mut cells = 0.0;
    for i in 0..heat_logits.data.len() {
        let z = heat_logits.data[i].clamp(-30.0, 30.0);
        let y = t.heatmap.data[i];
        // stable form of -(y ln p + (1-y) ln(1-p))
        let l = if z >= 0.0 {
            (1.0 - y) * z + (1.0 + (-z).exp()).ln()
        } else {
            -y * z + (1.0 + z.exp()).ln()
        };
        bce += l;
        cells += 1.0;
    }
    bce /= cells;
    let (_, gh, gw) = heat_logits.shape();
    let mut se = 0.0;
    let mut cnt = 0.0;
    for j in 0..heat_logits.channels {
        for y in 0..gh {
            for x in 0..gw {
                if t.mask.at(j, y, x) > 0.0 {
                    for c in 0..2 {
                        let e = offsets.at(2 * j + c, y, x) - t.offsets.at(2 * j + c, y, x) / stride;
                        se += e * e;
                        cnt += 1.0;
                    }
                }
            }
        }
    }
    let mse = if cnt > 0.0 { se / cnt } else { 0.0 };
    (w.heat * bce + w.offset * mse, bce)
}

pub fn loss_of(pred: &poserefine::net::Prediction<f64>, t: &TargetView<f64>, w: LossWeights) -> f64 {
    loss_and_output_grad(pred, t, w, 8, None).unwrap().total
}

/// Random architecture of 3 to 6 layers with three stride-2 layers, 1x1 or
/// 3x3 kernels and 2 to 6 channels.
pub fn random_arch(r: &mut ChaCha8Rng, joints: usize) -> poserefine::net::ArchConfig {
    let count = r.random_range(3..=6);
    let mut strided: Vec<usize> = (0..count).collect();
    for i in (1..count).rev() {
        let j = r.random_range(0..=i);
        strided.swap(i, j);
    }
    strided.truncate(3);
    let layers = (0..count)
        .map(|i| poserefine::net::LayerSpec {
            channels: r.random_range(2..=6),
            kernel: if r.random_bool(0.75) { 3 } else { 1 },
            stride: if strided.contains(&i) { 2 } else { 1 },
        })
        .collect();
    poserefine::net::ArchConfig {
        joints,
        layers,
        heat_bias_init: 0.0,
    }
}

/// A random network with random input and targets on a `side x side`
/// image.
pub struct GradCase {
    pub net: RefinerNet<f64>,
    pub input: Tensor3<f64>,
    pub heat: Tensor3<f64>,
    pub offsets: Tensor3<f64>,
    pub mask: Tensor3<f64>,
}

impl GradCase {
    pub fn targets(&self) -> TargetView<'_, f64> {
        TargetView {
            heatmap: &self.heat,
            offsets: &self.offsets,
            mask: &self.mask,
        }
    }
}

pub fn random_case(r: &mut ChaCha8Rng, arch: &poserefine::net::ArchConfig, side: usize) -> GradCase {
    let mut net = poserefine::net::init_weights::<f64>(arch, None, r.random()).unwrap();
    // biases away from zero keep fewer units near their kink
    for p in net.params_mut() {
        *p += r.random_range(-0.05..0.05);
    }
    let n = arch.joints;
    let c = 3 + n;
    let input = Tensor3::from_vec(c, side, side, (0..c * side * side).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let g = side.div_ceil(8);
    let heat = Tensor3::from_vec(n, g, g, (0..n * g * g).map(|_| if r.random_bool(0.3) { 1.0 } else { 0.0 }).collect()).unwrap();
    let offsets = Tensor3::from_vec(2 * n, g, g, (0..2 * n * g * g).map(|_| r.random_range(-8.0..8.0)).collect()).unwrap();
    let mask = heat.clone();
    GradCase {
        net,
        input,
        heat,
        offsets,
        mask,
    }
}
