//! Synthetic stick-figure world.
//!
//! Front-facing articulated figures in the 15-joint PoseTrack layout are
//! drawn onto textured backgrounds. Limbs and joints are colored by type,
//! with left and right counterparts sharing a color, so a mirrored image is
//! again a valid toy image. Frames are grouped into short sequences in which
//! every person keeps a track id and moves smoothly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::datasets::{builtin_schema, Dataset};
use crate::error::{Error, Result};
use crate::rng::{RngKey, StreamTag, UniformSource};
use crate::types::{FrameAnnotation, ImageRaster, Keypoint, Point, Pose, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub sequences: usize,
    pub frames_per_sequence: usize,
    pub min_people: usize,
    pub max_people: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Person heights are drawn from `[min_height, max_height]` pixels.
    pub min_height: f64,
    pub max_height: f64,
    /// Horizontal distance between neighbors, as a fraction of height.
    pub min_spacing: f64,
    pub max_spacing: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            sequences: 8,
            frames_per_sequence: 4,
            min_people: 1,
            max_people: 3,
            image_width: 480,
            image_height: 256,
            min_height: 160.0,
            max_height: 200.0,
            min_spacing: 0.45,
            max_spacing: 0.9,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequences == 0 || self.frames_per_sequence == 0 {
            return Err(Error::Config("toy dataset needs at least one frame".into()));
        }
        if self.min_people == 0 || self.min_people > self.max_people {
            return Err(Error::Config("need 1 <= min_people <= max_people".into()));
        }
        if !(self.min_height > 0.0 && self.min_height <= self.max_height) {
            return Err(Error::Config("need 0 < min_height <= max_height".into()));
        }
        if !(self.min_spacing > 0.0 && self.min_spacing <= self.max_spacing) {
            return Err(Error::Config("need 0 < min_spacing <= max_spacing".into()));
        }
        if (self.image_height as f64) < 1.1 * self.max_height || (self.image_width as f64) < 0.8 * self.max_height {
            return Err(Error::Config("image too small for the person heights".into()));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.sequences * self.frames_per_sequence
    }
}

/// A generated dataset with its rendered frames (same order as
/// `dataset.frames`).
#[derive(Debug, Clone)]
pub struct ToyData {
    pub dataset: Dataset,
    pub images: Vec<ImageRaster>,
}

/// Articulation state of one figure.
#[derive(Debug, Clone, Copy)]
struct Figure {
    root: Point,
    height: f64,
    vx: f64,
    lean: f64,
    /// Upper-arm and forearm angles from straight down, outward positive;
    /// index 0 is the right side.
    arm: [(f64, f64); 2],
    leg: [(f64, f64); 2],
}

fn uni(src: &mut impl UniformSource, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * src.uniform()
}

impl Figure {
    fn sample(src: &mut impl UniformSource, root: Point, height: f64) -> Self {
        let mut arm = [(0.0, 0.0); 2];
        let mut leg = [(0.0, 0.0); 2];
        for s in 0..2 {
            let up = uni(src, -0.3, 2.2);
            arm[s] = (up, up + uni(src, -1.2, 1.2));
            let th = uni(src, -0.15, 0.5);
            leg[s] = (th, th + uni(src, -0.4, 0.4));
        }
        Self {
            root,
            height,
            vx: uni(src, -4.0, 4.0),
            lean: uni(src, -0.12, 0.12),
            arm,
            leg,
        }
    }

    fn step(&mut self, src: &mut impl UniformSource, width: f64) {
        let jitter = |src: &mut dyn FnMut() -> f64, v: f64, lo: f64, hi: f64| (v + 0.3 * (src() - 0.5)).clamp(lo, hi);
        let mut u = || src.uniform();
        self.root.x += self.vx;
        let half = 0.35 * self.height;
        if self.root.x < half || self.root.x > width - half {
            self.vx = -self.vx;
            self.root.x = self.root.x.clamp(half, width - half);
        }
        self.lean = jitter(&mut u, self.lean, -0.12, 0.12);
        for s in 0..2 {
            self.arm[s].0 = jitter(&mut u, self.arm[s].0, -0.3, 2.2);
            self.arm[s].1 = jitter(&mut u, self.arm[s].1, self.arm[s].0 - 1.2, self.arm[s].0 + 1.2);
            self.leg[s].0 = jitter(&mut u, self.leg[s].0, -0.15, 0.5);
            self.leg[s].1 = jitter(&mut u, self.leg[s].1, self.leg[s].0 - 0.4, self.leg[s].0 + 0.4);
        }
    }

    /// Joint positions in PoseTrack-15 order.
    fn joints(&self) -> [Point; 15] {
        let h = self.height;
        let (sl, cl) = self.lean.sin_cos();
        let body = |dx: f64, dy: f64| Point::new(self.root.x + dx * cl - dy * sl, self.root.y + dx * sl + dy * cl);
        let dir = |side: f64, a: f64, len: f64| Point::new(side * a.sin() * len, a.cos() * len);
        let add = |p: Point, d: Point| Point::new(p.x + d.x, p.y + d.y);
        let mut out = [Point::default(); 15];
        // side -1 is the person's right, drawn on the viewer's left
        for (s, side) in [(0usize, -1.0f64), (1, 1.0)] {
            let hip = Point::new(self.root.x + side * 0.07 * h, self.root.y);
            let knee = add(hip, dir(side, self.leg[s].0, 0.25 * h));
            let ankle = add(knee, dir(side, self.leg[s].1, 0.23 * h));
            let shoulder = body(side * 0.12 * h, -0.33 * h);
            let elbow = add(shoulder, dir(side, self.arm[s].0, 0.16 * h));
            let wrist = add(elbow, dir(side, self.arm[s].1, 0.15 * h));
            let (ia, ik, ih, iw, ie, is) = if s == 0 { (0, 1, 2, 6, 7, 8) } else { (5, 4, 3, 11, 10, 9) };
            out[ia] = ankle;
            out[ik] = knee;
            out[ih] = hip;
            out[iw] = wrist;
            out[ie] = elbow;
            out[is] = shoulder;
        }
        out[12] = body(0.0, -0.36 * h);
        out[13] = body(0.0, -0.44 * h);
        out[14] = body(0.0, -0.54 * h);
        out
    }

    fn pose(&self, track: u64) -> Pose {
        let j = self.joints();
        let mut pose = Pose::new(j.iter().map(|p| Keypoint::new(p.x, p.y)).collect());
        let c = j[12].midpoint(j[14]);
        let r = 0.1 * self.height;
        pose.head_box = Some(Rect::new(c.x - r, c.y - r, c.x + r, c.y + r));
        pose.height_px = Some(self.height);
        pose.track_id = Some(track);
        pose
    }
}

// Colors by joint type, shared by left/right counterparts.
const JOINT_COLORS: [[u8; 3]; 15] = [
    [255, 0, 255], // ankle
    [0, 255, 255], // knee
    [255, 255, 0], // hip
    [255, 255, 0],
    [0, 255, 255],
    [255, 0, 255],
    [255, 64, 0],  // wrist
    [0, 64, 255],  // elbow
    [0, 200, 0],   // shoulder
    [0, 200, 0],
    [0, 64, 255],
    [255, 64, 0],
    [255, 255, 255], // head bottom
    [200, 0, 0],     // nose
    [40, 40, 40],    // head top
];

// (joint a, joint b, color)
const LIMBS: [(usize, usize, [u8; 3]); 14] = [
    (0, 1, [150, 0, 150]),
    (5, 4, [150, 0, 150]),
    (1, 2, [0, 140, 140]),
    (4, 3, [0, 140, 140]),
    (2, 3, [140, 140, 0]),
    (6, 7, [160, 40, 0]),
    (11, 10, [160, 40, 0]),
    (7, 8, [0, 40, 160]),
    (10, 9, [0, 40, 160]),
    (8, 9, [0, 120, 0]),
    (8, 2, [90, 90, 90]),
    (9, 3, [90, 90, 90]),
    (12, 8, [0, 120, 0]),
    (12, 9, [0, 120, 0]),
];

const SKIN: [u8; 3] = [230, 190, 150];

fn segment_dist2(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
    qx * qx + qy * qy
}

fn draw_capsule(img: &mut ImageRaster, a: Point, b: Point, radius: f64, color: [u8; 3]) {
    let r2 = radius * radius;
    let x0 = (a.x.min(b.x) - radius).floor().max(0.0) as isize;
    let x1 = (a.x.max(b.x) + radius).ceil().min(img.width() as f64 - 1.0) as isize;
    let y0 = (a.y.min(b.y) - radius).floor().max(0.0) as isize;
    let y1 = (a.y.max(b.y) + radius).ceil().min(img.height() as f64 - 1.0) as isize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if segment_dist2(Point::new(x as f64, y as f64), a, b) <= r2 {
                img.put(x as usize, y as usize, color);
            }
        }
    }
}

fn draw_background(img: &mut ImageRaster, src: &mut impl UniformSource) {
    let base = [uni(src, 60.0, 140.0), uni(src, 60.0, 140.0), uni(src, 60.0, 140.0)];
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| (uni(src, -0.08, 0.08), uni(src, -0.08, 0.08), uni(src, 0.0, 2.0 * PI), uni(src, 10.0, 30.0)))
        .collect();
    let mut noise = src.uniform().to_bits();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let mut v = 0.0;
            for &(fx, fy, ph, amp) in &waves {
                v += amp * (fx * x as f64 + fy * y as f64 + ph).sin();
            }
            // xorshift grain
            noise ^= noise << 13;
            noise ^= noise >> 7;
            noise ^= noise << 17;
            let grain = (noise % 25) as f64 - 12.0;
            let px = [0, 1, 2].map(|c| (base[c] + v + grain).round().clamp(0.0, 255.0) as u8);
            img.put(x, y, px);
        }
    }
}

fn draw_figure(img: &mut ImageRaster, joints: &[Point; 15], height: f64) {
    let limb = 0.018 * height;
    for &(a, b, c) in &LIMBS {
        draw_capsule(img, joints[a], joints[b], limb, c);
    }
    let head_c = joints[12].midpoint(joints[14]);
    draw_capsule(img, head_c, head_c, 0.085 * height, SKIN);
    let dot = 0.022 * height;
    for (j, p) in joints.iter().enumerate() {
        draw_capsule(img, *p, *p, dot, JOINT_COLORS[j]);
    }
}

/// Renders poses (drawn in order, later people in front).
pub fn render_frame(width: usize, height: usize, figures: &[(Pose, f64)], bg: &mut impl UniformSource) -> ImageRaster {
    let mut img = ImageRaster::filled(width, height, [0, 0, 0]);
    draw_background(&mut img, bg);
    for (pose, h) in figures {
        let mut j = [Point::default(); 15];
        for (d, k) in j.iter_mut().zip(&pose.joints) {
            *d = k.point();
        }
        draw_figure(&mut img, &j, *h);
    }
    img
}

/// Generates `sequences x frames_per_sequence` frames. Frame images are
/// referenced as `seqNNN_MMM.png`.
pub fn generate_toy_dataset(cfg: &ToyConfig, seed: u64) -> Result<ToyData> {
    cfg.validate()?;
    let schema = builtin_schema("posetrack15")?;
    let (w, h) = (cfg.image_width as f64, cfg.image_height as f64);
    let mut frames = Vec::with_capacity(cfg.frame_count());
    let mut images = Vec::with_capacity(cfg.frame_count());
    for s in 0..cfg.sequences {
        let seq = format!("seq{s:03}");
        let key = |frame: u64, person: u64| RngKey::new(seed, format!("toy/{seq}"), frame, person);
        let mut setup = key(0, u64::MAX).stream(StreamTag::Toy);
        let people = cfg.min_people + setup.index(cfg.max_people - cfg.min_people + 1);
        let mut figs = Vec::with_capacity(people);
        let heights: Vec<f64> = (0..people).map(|_| uni(&mut setup, cfg.min_height, cfg.max_height)).collect();
        let gaps: Vec<f64> = (1..people)
            .map(|i| uni(&mut setup, cfg.min_spacing, cfg.max_spacing) * 0.5 * (heights[i - 1] + heights[i]))
            .collect();
        let span: f64 = gaps.iter().sum();
        let left = 0.35 * cfg.max_height;
        let room = (w - 2.0 * left - span).max(0.0);
        let mut x = left + uni(&mut setup, 0.0, room);
        for (i, &ph) in heights.iter().enumerate() {
            if i > 0 {
                x += gaps[i - 1];
            }
            let ground = uni(&mut setup, 0.02 * h, 0.06 * h);
            // ankles sit about 0.46 h below the root
            let root = Point::new(x, h - ground - 0.47 * ph);
            figs.push(Figure::sample(&mut key(0, i as u64).stream(StreamTag::Toy), root, ph));
        }
        for f in 0..cfg.frames_per_sequence {
            if f > 0 {
                for (i, fig) in figs.iter_mut().enumerate() {
                    fig.step(&mut key(f as u64, i as u64).stream(StreamTag::Toy), w);
                }
            }
            let poses: Vec<(Pose, f64)> = figs
                .iter()
                .enumerate()
                .map(|(i, fig)| (fig.pose(i as u64 + 1), fig.height))
                .collect();
            let mut bg = key(f as u64, u64::MAX - 1).stream(StreamTag::Other(1));
            images.push(render_frame(cfg.image_width, cfg.image_height, &poses, &mut bg));
            frames.push(FrameAnnotation {
                image: format!("{seq}_{f:03}.png"),
                sequence_id: Some(seq.clone()),
                frame_index: f as u64,
                people: poses.into_iter().map(|(p, _)| p).collect(),
            });
        }
    }
    Ok(ToyData {
        dataset: Dataset::new(schema, frames)?,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::flip_pose;

    #[test]
    fn single_person() {
        let cfg = ToyConfig {
            sequences: 1,
            frames_per_sequence: 1,
            min_people: 1,
            max_people: 1,
            ..ToyConfig::default()
        };
        let toy = generate_toy_dataset(&cfg, 5).unwrap();
        assert_eq!(toy.dataset.frames.len(), 1);
        let p = &toy.dataset.frames[0].people[0];
        assert_eq!(p.present_count(), 15);
        assert_eq!(p.track_id, Some(1));
        for k in &p.joints {
            assert!(k.x >= 0.0 && k.y >= 0.0 && k.x < 480.0 && k.y < 256.0, "{k:?}");
        }
    }

    #[test]
    fn mirrored_figure_renders_like_flipped_pose() {
        let fig = Figure::sample(&mut RngKey::from_seed(9).stream(StreamTag::Toy), Point::new(120.0, 140.0), 180.0);
        let schema = builtin_schema("posetrack15").unwrap();
        let pose = fig.pose(1);
        let flipped = flip_pose(&pose, &schema, 240.0);
        let mut plain = ImageRaster::filled(240, 256, [0, 0, 0]);
        let mut j = [Point::default(); 15];
        for (d, k) in j.iter_mut().zip(&flipped.joints) {
            *d = k.point();
        }
        draw_figure(&mut plain, &j, 180.0);
        let mut orig = ImageRaster::filled(240, 256, [0, 0, 0]);
        draw_figure(&mut orig, &fig.joints(), 180.0);
        let mirrored = orig.flipped();
        let differing = (0..256)
            .flat_map(|y| (0..240).map(move |x| (x, y)))
            .filter(|&(x, y)| mirrored.get(x, y) != plain.get(x, y))
            .count();
        // only overlap order at crossings may differ
        assert!(differing < 200, "{differing} pixels differ");
    }

    #[test]
    fn deterministic() {
        let cfg = ToyConfig {
            sequences: 2,
            frames_per_sequence: 2,
            ..ToyConfig::default()
        };
        let a = generate_toy_dataset(&cfg, 11).unwrap();
        let b = generate_toy_dataset(&cfg, 11).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.images, b.images);
    }
}
