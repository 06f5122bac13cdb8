//! Geometric normalization, input encoding and training targets.
//!
//! A person is rescaled to a reference height and cropped with a fixed
//! context margin around the bounding box of the input pose. The network
//! input stacks the RGB crop (scaled to `[0, 1]`) with one binary disk
//! channel per joint. Targets live on the stride grid: cell `(gx, gy)` has
//! center `(s*gx + s/2, s*gy + s/2)` and is positive for joint `j` when that
//! center lies within `target_radius` of the joint; positive cells also carry
//! the offset from the cell center to the joint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::UniformSource;
use crate::tensor::Tensor3;
use crate::types::{flip_pose, pose_bbox, ImageRaster, JointSchema, Point, Pose};

/// Normalization and encoding geometry, in pixels of the normalized frame
/// unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    /// Person height after rescaling.
    pub ref_height: f64,
    /// Context added on every side of the pose bounding box.
    pub margin: f64,
    /// Radius of the input pose disks.
    pub blob_radius: f64,
    /// Radius of the positive target region.
    pub target_radius: f64,
    pub stride: usize,
    /// Person height per unit of head-box diagonal (original pixels).
    pub head_box_factor: f64,
    /// Person height per unit of joint bounding-box height.
    pub bbox_factor: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            ref_height: 340.0,
            margin: 250.0,
            blob_radius: 15.0,
            target_radius: 15.0,
            stride: 8,
            head_box_factor: 6.0,
            bbox_factor: 1.25,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ref_height", self.ref_height),
            ("blob_radius", self.blob_radius),
            ("target_radius", self.target_radius),
            ("head_box_factor", self.head_box_factor),
            ("bbox_factor", self.bbox_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config("margin must be non-negative".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        // every point must have a positive cell center within reach
        let half = self.stride as f64 / 2.0;
        if self.target_radius < half * std::f64::consts::SQRT_2 {
            return Err(Error::Config(format!(
                "target_radius {} leaves points without a positive cell at stride {}",
                self.target_radius, self.stride
            )));
        }
        Ok(())
    }
}

/// Person height in original pixels: explicit height, else a multiple of
/// the head-box diagonal, else a multiple of the joint bounding-box height.
pub fn estimate_height(pose: &Pose, geom: &Geometry) -> Result<f64> {
    if let Some(h) = pose.height_px.filter(|h| *h > 0.0 && h.is_finite()) {
        return Ok(h);
    }
    if let Some(b) = pose.head_box {
        let d = b.diagonal();
        if d > 0.0 {
            return Ok(geom.head_box_factor * d);
        }
    }
    if pose.present_count() >= 2 {
        let h = pose_bbox(pose)?.height() * geom.bbox_factor;
        if h > 0.0 {
            return Ok(h);
        }
    }
    Err(Error::HeightUndefined)
}

/// Maps original image coordinates to crop coordinates: `p_crop = scale * p - origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub scale: f64,
    pub crop_origin: Point,
    pub crop_size: (usize, usize),
}

impl NormParams {
    pub fn to_crop(&self, p: Point) -> Point {
        Point::new(
            self.scale * p.x - self.crop_origin.x,
            self.scale * p.y - self.crop_origin.y,
        )
    }

    pub fn to_image(&self, p: Point) -> Point {
        Point::new(
            (p.x + self.crop_origin.x) / self.scale,
            (p.y + self.crop_origin.y) / self.scale,
        )
    }

    pub fn pose_to_crop(&self, pose: &Pose) -> Pose {
        let mut out = pose.map_points(|p| self.to_crop(p));
        out.height_px = pose.height_px.map(|h| h * self.scale);
        out
    }

    pub fn pose_to_image(&self, pose: &Pose) -> Pose {
        let mut out = pose.map_points(|p| self.to_image(p));
        out.height_px = pose.height_px.map(|h| h / self.scale);
        out
    }
}

/// Crop window for `pose`; does not touch pixels.
pub fn norm_params(pose: &Pose, geom: &Geometry) -> Result<NormParams> {
    let scale = geom.ref_height / estimate_height(pose, geom)?;
    let b = pose_bbox(pose)?;
    let x0 = (scale * b.x1 - geom.margin).floor();
    let y0 = (scale * b.y1 - geom.margin).floor();
    let x1 = (scale * b.x2 + geom.margin).ceil();
    let y1 = (scale * b.y2 + geom.margin).ceil();
    Ok(NormParams {
        scale,
        crop_origin: Point::new(x0, y0),
        crop_size: ((x1 - x0).max(1.0) as usize, (y1 - y0).max(1.0) as usize),
    })
}

/// Bilinear sample with zeros outside the image.
fn sample_bilinear(img: &ImageRaster, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut out = [0.0; 3];
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (px, py) = (xi + dx, yi + dy);
            let wgt = wx * wy;
            if wgt == 0.0 || px < 0 || py < 0 || px >= w || py >= h {
                continue;
            }
            let rgb = img.get(px as usize, py as usize);
            for c in 0..3 {
                out[c] += wgt * f64::from(rgb[c]);
            }
        }
    }
    out
}

/// Renders a `width x height` image whose pixel `(u, v)` samples `src` at
/// `map(u, v)`.
fn resample(src: &ImageRaster, width: usize, height: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> ImageRaster {
    let mut px = Vec::with_capacity(3 * width * height);
    for v in 0..height {
        for u in 0..width {
            let (x, y) = map(u as f64, v as f64);
            let rgb = sample_bilinear(src, x, y);
            px.extend(rgb.iter().map(|c| c.round().clamp(0.0, 255.0) as u8));
        }
    }
    ImageRaster::new(width, height, px).expect("buffer sized from dims")
}

/// Rescales to the reference height and crops around the pose.
pub fn normalize(image: &ImageRaster, pose: &Pose, geom: &Geometry) -> Result<(ImageRaster, Pose, NormParams)> {
    let params = norm_params(pose, geom)?;
    let (w, h) = params.crop_size;
    let crop = resample(image, w, h, |u, v| {
        let p = params.to_image(Point::new(u, v));
        (p.x, p.y)
    });
    Ok((crop, params.pose_to_crop(pose), params))
}

/// Inverse of the coordinate part of [`normalize`].
pub fn denormalize(pose: &Pose, params: &NormParams) -> Pose {
    params.pose_to_image(pose)
}

/// Binary disks of `radius` around each present joint; absent joints give
/// all-zero channels.
pub fn encode_pose_channels(pose: &Pose, n: usize, width: usize, height: usize, radius: f64) -> Tensor3<f32> {
    let mut t = Tensor3::zeros(n, height, width);
    let r2 = radius * radius;
    for (j, k) in pose.joints.iter().enumerate().take(n) {
        let Some(p) = k.position() else { continue };
        let y_lo = (p.y - radius - 1e-7).ceil().max(0.0);
        let y_hi = (p.y + radius + 1e-7).floor().min(height as f64 - 1.0);
        if y_hi < y_lo {
            continue;
        }
        for y in y_lo as usize..=y_hi as usize {
            let dy = y as f64 - p.y;
            let rem = r2 - dy * dy;
            if rem < 0.0 {
                continue;
            }
            let span = rem.sqrt() + 1e-7;
            let x_lo = (p.x - span).ceil().max(0.0);
            let x_hi = (p.x + span).floor().min(width as f64 - 1.0);
            if x_hi < x_lo {
                continue;
            }
            for x in x_lo as usize..=x_hi as usize {
                let dx = x as f64 - p.x;
                if dx * dx + dy * dy <= r2 {
                    t.set(j, y, x, 1.0);
                }
            }
        }
    }
    t
}

/// `3 + n` channel network input: RGB in `[0, 1]` then the pose disks.
pub fn encode_input(image: &ImageRaster, pose: &Pose, n: usize, blob_radius: f64) -> Tensor3<f32> {
    let (w, h) = (image.width(), image.height());
    let mut t = Tensor3::zeros(3 + n, h, w);
    for y in 0..h {
        for x in 0..w {
            let rgb = image.get(x, y);
            for c in 0..3 {
                t.set(c, y, x, f32::from(rgb[c]) / 255.0);
            }
        }
    }
    let pose_ch = encode_pose_channels(pose, n, w, h, blob_radius);
    t.data[3 * w * h..].copy_from_slice(&pose_ch.data);
    t
}

/// Heatmap, offset and mask targets on the stride grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub heatmap: Tensor3<f32>,
    /// `2n` channels: `(dx, dy)` for joint `j` at channels `2j`, `2j + 1`, in
    /// input pixels.
    pub offsets: Tensor3<f32>,
    pub mask: Tensor3<f32>,
}

pub fn grid_dims(width: usize, height: usize, stride: usize) -> (usize, usize) {
    (width.div_ceil(stride), height.div_ceil(stride))
}

pub fn cell_center(g: usize, stride: usize) -> f64 {
    (stride * g) as f64 + stride as f64 / 2.0
}

pub fn make_targets(gt: &Pose, n: usize, width: usize, height: usize, stride: usize, radius: f64) -> Targets {
    let (gw, gh) = grid_dims(width, height, stride);
    let mut heatmap = Tensor3::zeros(n, gh, gw);
    let mut offsets = Tensor3::zeros(2 * n, gh, gw);
    let r2 = radius * radius;
    for (j, k) in gt.joints.iter().enumerate().take(n) {
        let Some(p) = k.position() else { continue };
        for gy in 0..gh {
            let cy = cell_center(gy, stride);
            let dy = p.y - cy;
            if dy * dy > r2 {
                continue;
            }
            for gx in 0..gw {
                let cx = cell_center(gx, stride);
                let dx = p.x - cx;
                if dx * dx + dy * dy <= r2 {
                    heatmap.set(j, gy, gx, 1.0);
                    offsets.set(2 * j, gy, gx, dx as f32);
                    offsets.set(2 * j + 1, gy, gx, dy as f32);
                }
            }
        }
    }
    let mask = heatmap.clone();
    Targets {
        heatmap,
        offsets,
        mask,
    }
}

/// Exact-precision variant of the offset targets, used to check decoding
/// without single-precision rounding.
pub fn make_offsets_f64(gt: &Pose, n: usize, width: usize, height: usize, stride: usize, radius: f64) -> (Tensor3<f64>, Tensor3<f64>) {
    let (gw, gh) = grid_dims(width, height, stride);
    let mut heat = Tensor3::zeros(n, gh, gw);
    let mut off = Tensor3::zeros(2 * n, gh, gw);
    let r2 = radius * radius;
    for (j, k) in gt.joints.iter().enumerate().take(n) {
        let Some(p) = k.position() else { continue };
        for gy in 0..gh {
            for gx in 0..gw {
                let dx = p.x - cell_center(gx, stride);
                let dy = p.y - cell_center(gy, stride);
                if dx * dx + dy * dy <= r2 {
                    heat.set(j, gy, gx, 1.0);
                    off.set(2 * j, gy, gx, dx);
                    off.set(2 * j + 1, gy, gx, dy);
                }
            }
        }
    }
    (heat, off)
}

/// Network input plus its training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorPack {
    pub input: Tensor3<f32>,
    pub heatmap_target: Tensor3<f32>,
    pub offset_target: Tensor3<f32>,
    pub offset_mask: Tensor3<f32>,
}

impl TensorPack {
    /// Encodes an already normalized (and possibly augmented) sample.
    pub fn build(crop: &ImageRaster, input_pose: &Pose, gt_pose: &Pose, n: usize, geom: &Geometry) -> Self {
        let input = encode_input(crop, input_pose, n, geom.blob_radius);
        let t = make_targets(gt_pose, n, crop.width(), crop.height(), geom.stride, geom.target_radius);
        Self {
            input,
            heatmap_target: t.heatmap,
            offset_target: t.offsets,
            offset_mask: t.mask,
        }
    }

    pub fn targets(&self) -> Targets {
        Targets {
            heatmap: self.heatmap_target.clone(),
            offsets: self.offset_target.clone(),
            mask: self.offset_mask.clone(),
        }
    }

    /// Writes the four grids as consecutive `PRTP` records.
    pub fn dump(&self, w: &mut impl std::io::Write) -> Result<()> {
        for g in [&self.input, &self.heatmap_target, &self.offset_target, &self.offset_mask] {
            crate::tensor::write_grid(w, g)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Scale factors are drawn from `[1 - scale_jitter, 1 + scale_jitter]`.
    pub scale_jitter: f64,
    pub flip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_jitter: 0.3,
            flip_prob: 0.5,
        }
    }
}

/// The drawn augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub scale: f64,
    pub flip: bool,
}

impl AugmentDraw {
    /// Draw order: scale, then flip.
    pub fn sample(cfg: &AugmentConfig, src: &mut impl UniformSource) -> Self {
        let scale = 1.0 - cfg.scale_jitter + 2.0 * cfg.scale_jitter * src.uniform();
        let flip = src.uniform() < cfg.flip_prob;
        Self { scale, flip }
    }
}

/// Applies one scale/flip transform jointly to an image and two poses.
pub fn apply_augment(
    image: &ImageRaster,
    gt: &Pose,
    input: &Pose,
    schema: &JointSchema,
    draw: AugmentDraw,
) -> (ImageRaster, Pose, Pose) {
    let a = draw.scale;
    let w = ((image.width() as f64 * a).round() as usize).max(1);
    let h = ((image.height() as f64 * a).round() as usize).max(1);
    let flip = draw.flip;
    let wf = w as f64;
    let img = resample(image, w, h, |u, v| {
        let u = if flip { wf - 1.0 - u } else { u };
        (u / a, v / a)
    });
    let scale_pose = |p: &Pose| {
        let mut s = p.map_points(|q| Point::new(a * q.x, a * q.y));
        s.height_px = p.height_px.map(|v| v * a);
        if flip {
            flip_pose(&s, schema, wf)
        } else {
            s
        }
    };
    (img, scale_pose(gt), scale_pose(input))
}

pub fn augment(
    image: &ImageRaster,
    gt: &Pose,
    input: &Pose,
    schema: &JointSchema,
    cfg: &AugmentConfig,
    src: &mut impl UniformSource,
) -> (ImageRaster, Pose, Pose) {
    let draw = AugmentDraw::sample(cfg, src);
    apply_augment(image, gt, input, schema, draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngKey, ScriptedDraws, StreamTag};
    use crate::types::{Keypoint, Rect};

    fn pose_at(points: &[(f64, f64)]) -> Pose {
        Pose::new(points.iter().map(|&(x, y)| Keypoint::new(x, y)).collect())
    }

    #[test]
    fn height_sources_in_priority_order() {
        let g = Geometry::default();
        let mut p = pose_at(&[(0.0, 0.0), (10.0, 200.0)]);
        assert_eq!(estimate_height(&p, &g).unwrap(), 250.0);
        p.head_box = Some(Rect::new(0.0, 0.0, 30.0, 40.0));
        assert_eq!(estimate_height(&p, &g).unwrap(), 300.0);
        p.height_px = Some(170.0);
        assert_eq!(estimate_height(&p, &g).unwrap(), 170.0);
    }

    #[test]
    fn height_undefined() {
        let g = Geometry::default();
        let p = pose_at(&[(3.0, 4.0)]);
        assert!(matches!(estimate_height(&p, &g), Err(Error::HeightUndefined)));
    }

    #[test]
    fn scale_for_height_170() {
        let mut p = pose_at(&[(50.0, 25.0), (150.0, 200.0)]);
        p.height_px = Some(170.0);
        let np = norm_params(&p, &Geometry::default()).unwrap();
        assert_eq!(np.scale, 2.0);
        // scaled bbox (100..300, 50..400)
        assert_eq!(np.crop_origin, Point::new(-150.0, -200.0));
        assert_eq!(np.crop_size, (700, 850));
    }

    #[test]
    fn crop_is_zero_padded_outside_image() {
        let img = ImageRaster::filled(20, 20, [200, 100, 50]);
        let mut p = pose_at(&[(5.0, 5.0), (15.0, 15.0)]);
        p.height_px = Some(340.0);
        let g = Geometry {
            margin: 10.0,
            ..Geometry::default()
        };
        let (crop, cp, np) = normalize(&img, &p, &g).unwrap();
        assert_eq!(np.scale, 1.0);
        assert_eq!((crop.width(), crop.height()), (30, 30));
        assert_eq!(crop.get(0, 0), [0, 0, 0]);
        assert_eq!(crop.get(15, 15), [200, 100, 50]);
        assert_eq!(cp.joints[0].point(), Point::new(10.0, 10.0));
    }

    #[test]
    fn round_trip_coordinates() {
        let g = Geometry::default();
        let mut s = RngKey::from_seed(11).stream(StreamTag::Other(0));
        for _ in 0..500 {
            let pts: Vec<_> = (0..15)
                .map(|_| (s.uniform() * 2000.0 - 500.0, s.uniform() * 2000.0 - 500.0))
                .collect();
            let mut p = pose_at(&pts);
            p.height_px = Some(20.0 + 500.0 * s.uniform());
            let np = norm_params(&p, &g).unwrap();
            let back = denormalize(&np.pose_to_crop(&p), &np);
            for (a, b) in back.joints.iter().zip(&p.joints) {
                assert!(a.point().dist(b.point()) <= 1e-9);
            }
        }
    }

    #[test]
    fn disk_boundary_inclusive() {
        let p = pose_at(&[(40.0, 40.0)]);
        let t = encode_pose_channels(&p, 1, 100, 100, 15.0);
        assert_eq!(t.at(0, 55, 40), 1.0);
        assert_eq!(t.at(0, 56, 40), 0.0);
    }

    #[test]
    fn interior_disk_has_709_pixels() {
        // brute-force lattice count for radius 15
        let mut expected = 0;
        for dy in -15i32..=15 {
            for dx in -15i32..=15 {
                if dx * dx + dy * dy <= 225 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 709);
        let t = encode_pose_channels(&pose_at(&[(50.0, 50.0)]), 1, 100, 100, 15.0);
        assert_eq!(t.data.iter().filter(|&&v| v == 1.0).count(), expected);
    }

    #[test]
    fn fractional_disk_matches_brute_force() {
        let mut s = RngKey::from_seed(2).stream(StreamTag::Other(1));
        for _ in 0..50 {
            let (x, y) = (s.uniform() * 60.0 - 5.0, s.uniform() * 60.0 - 5.0);
            let r = 1.0 + 14.0 * s.uniform();
            let t = encode_pose_channels(&pose_at(&[(x, y)]), 1, 50, 50, r);
            for py in 0..50 {
                for px in 0..50 {
                    let inside = (px as f64 - x).powi(2) + (py as f64 - y).powi(2) <= r * r;
                    assert_eq!(t.at(0, py, px) == 1.0, inside);
                }
            }
        }
    }

    #[test]
    fn absent_joints_give_null_channels() {
        let t = encode_pose_channels(&Pose::all_absent(4), 4, 32, 32, 15.0);
        assert!(t.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn target_cell_conventions() {
        let t = make_targets(&pose_at(&[(40.0, 40.0)]), 1, 100, 100, 8, 15.0);
        assert_eq!(t.heatmap.shape(), (1, 13, 13));
        assert_eq!(t.heatmap.at(0, 4, 4), 1.0);
        assert_eq!(t.offsets.at(0, 4, 4), 4.0);
        assert_eq!(t.offsets.at(1, 4, 4), 4.0);
        let t = make_targets(&pose_at(&[(44.0, 44.0)]), 1, 100, 100, 8, 15.0);
        assert_eq!(t.offsets.at(0, 5, 5), 0.0);
        assert_eq!(t.offsets.at(1, 5, 5), 0.0);
        assert_eq!(t.mask, t.heatmap);
    }

    #[test]
    fn grid_dims_round_up() {
        assert_eq!(grid_dims(850, 700, 8), (107, 88));
    }

    #[test]
    fn forced_identity_augment() {
        let img = ImageRaster::filled(9, 7, [1, 2, 3]);
        let p = pose_at(&[(1.0, 2.0)]);
        let schema = JointSchema::new(vec!["a".into()], vec![], None).unwrap();
        let cfg = AugmentConfig::default();
        let (i2, g2, p2) = augment(&img, &p, &p, &schema, &cfg, &mut ScriptedDraws::new([0.5, 0.9]));
        assert_eq!(i2, img);
        assert_eq!(g2, p);
        assert_eq!(p2, p);
    }

    #[test]
    fn augment_moves_image_and_poses_together() {
        let schema = JointSchema::new(vec!["l".into(), "r".into()], vec![(0, 1)], None).unwrap();
        let mut img = ImageRaster::filled(40, 30, [0, 0, 0]);
        img.put(10, 12, [255, 255, 255]);
        let gt = pose_at(&[(10.0, 12.0), (30.0, 5.0)]);
        let inp = pose_at(&[(10.0, 12.0), (2.0, 2.0)]);
        for (scale_draw, expect_scale) in [(0.5, 1.0), (1.0 - 1e-12, 1.3), (0.0, 0.7)] {
            let mut src = ScriptedDraws::new([scale_draw, 0.1]);
            let (im, g, p) = augment(&img, &gt, &inp, &schema, &AugmentConfig::default(), &mut src);
            let a: f64 = expect_scale;
            assert!((im.width() as f64 - (40.0 * a).round()).abs() < 1e-9);
            // gt and input share the same permutation
            assert!(!g.joints.is_empty() && g.joints[1].present && p.joints[1].present);
            let q = g.joints[1].point();
            assert!((q.x - (im.width() as f64 - 1.0 - a * 10.0)).abs() < 1e-6);
            assert!((q.y - a * 12.0).abs() < 1e-6);
            assert_eq!(p.joints[1].point(), q);
            // brightest pixel sits at the transformed marker
            let (mut best, mut at) = (0u32, (0, 0));
            for y in 0..im.height() {
                for x in 0..im.width() {
                    let v = im.get(x, y)[0] as u32;
                    if v > best {
                        best = v;
                        at = (x, y);
                    }
                }
            }
            assert!((at.0 as f64 - q.x).abs() <= 1.0 && (at.1 as f64 - q.y).abs() <= 1.0, "{at:?} vs {q:?}");
        }
    }

    #[test]
    fn scale_draws_are_uniform() {
        // one-sample Kolmogorov-Smirnov against U[0.7, 1.3], alpha = 0.01
        let cfg = AugmentConfig::default();
        let mut src = RngKey::from_seed(77).stream(StreamTag::Augment);
        let n = 100_000;
        let mut v: Vec<f64> = (0..n).map(|_| AugmentDraw::sample(&cfg, &mut src).scale).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(v[0] >= 0.7 && v[n - 1] <= 1.3);
        let d = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = (x - 0.7) / 0.6;
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }
}
