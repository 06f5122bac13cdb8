//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are continuous pixels with the origin at the center of the
//! top-left pixel, so pixel `(i, j)` covers `[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Axis-aligned rectangle `[x1, x2] x [y1, y2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Rect {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// A named joint set with its left/right symmetry and head segment.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSchema {
    names: Vec<String>,
    flip_pairs: Vec<(usize, usize)>,
    head_pair: Option<(usize, usize)>,
    partner: Vec<Option<usize>>,
}

impl JointSchema {
    /// Validates uniqueness of names, index bounds and that every joint
    /// appears in at most one flip pair.
    pub fn new(
        names: Vec<String>,
        flip_pairs: Vec<(usize, usize)>,
        head_pair: Option<(usize, usize)>,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::InvalidSchema("schema has no joints".into()));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidSchema(format!("duplicate joint name {name:?}")));
            }
        }
        let mut partner = vec![None; n];
        for &(a, b) in &flip_pairs {
            if a >= n || b >= n {
                return Err(Error::InvalidSchema(format!("flip pair ({a}, {b}) out of range")));
            }
            if a == b || partner[a].is_some() || partner[b].is_some() {
                return Err(Error::InvalidSchema(format!(
                    "flip pair ({a}, {b}) reuses a joint"
                )));
            }
            partner[a] = Some(b);
            partner[b] = Some(a);
        }
        if let Some((t, b)) = head_pair {
            if t >= n || b >= n || t == b {
                return Err(Error::InvalidSchema(format!("head pair ({t}, {b}) invalid")));
            }
        }
        Ok(Self {
            names,
            flip_pairs,
            head_pair,
            partner,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn flip_pairs(&self) -> &[(usize, usize)] {
        &self.flip_pairs
    }

    /// `(top_head, bottom_head)`.
    pub fn head_pair(&self) -> Option<(usize, usize)> {
        self.head_pair
    }

    pub fn flip_partner(&self, joint: usize) -> Option<usize> {
        self.partner[joint]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub present: bool,
    pub score: Option<f64>,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            present: true,
            score: None,
        }
    }

    pub const fn absent() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            present: false,
            score: None,
        }
    }

    pub const fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Coordinates when present.
    pub fn position(&self) -> Option<Point> {
        self.present.then(|| self.point())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joints: Vec<Keypoint>,
    pub head_box: Option<Rect>,
    pub height_px: Option<f64>,
    pub track_id: Option<u64>,
    /// Precomputed top-of-head point for schemas that do not annotate it.
    pub top_head_hint: Option<Point>,
}

impl Pose {
    pub fn new(joints: Vec<Keypoint>) -> Self {
        Self {
            joints,
            head_box: None,
            height_px: None,
            track_id: None,
            top_head_hint: None,
        }
    }

    pub fn all_absent(n: usize) -> Self {
        Self::new(vec![Keypoint::absent(); n])
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn present_count(&self) -> usize {
        self.joints.iter().filter(|k| k.present).count()
    }

    pub fn validate(&self, schema: &JointSchema) -> Result<()> {
        if self.joints.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "pose has {} joints, schema expects {}",
                self.joints.len(),
                schema.len()
            )));
        }
        if let Some(b) = self.head_box {
            if !(b.width() > 0.0 && b.height() > 0.0) {
                return Err(Error::Data("head box must have positive size".into()));
            }
        }
        Ok(())
    }

    /// Applies `f` to the coordinates of every present joint and of the
    /// geometric metadata (head box, top-head hint).
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Pose {
        let mut out = self.clone();
        for k in out.joints.iter_mut().filter(|k| k.present) {
            let p = f(k.point());
            k.x = p.x;
            k.y = p.y;
        }
        out.top_head_hint = self.top_head_hint.map(&f);
        out.head_box = self.head_box.map(|b| {
            let a = f(Point::new(b.x1, b.y1));
            let c = f(Point::new(b.x2, b.y2));
            Rect::new(a.x.min(c.x), a.y.min(c.y), a.x.max(c.x), a.y.max(c.y))
        });
        out
    }
}

/// Tight bounding box over the present joints.
pub fn pose_bbox(pose: &Pose) -> Result<Rect> {
    let mut it = pose.joints.iter().filter_map(Keypoint::position);
    let first = it.next().ok_or(Error::NoJointsPresent)?;
    Ok(it.fold(Rect::new(first.x, first.y, first.x, first.y), |r, p| {
        Rect::new(r.x1.min(p.x), r.y1.min(p.y), r.x2.max(p.x), r.y2.max(p.y))
    }))
}

/// Mirrors a pose around the vertical axis of an image `image_width` pixels
/// wide and relabels left/right joints.
pub fn flip_pose(pose: &Pose, schema: &JointSchema, image_width: f64) -> Pose {
    let mirror = |p: Point| Point::new(image_width - 1.0 - p.x, p.y);
    let mut out = pose.map_points(mirror);
    for &(a, b) in schema.flip_pairs() {
        out.joints.swap(a, b);
    }
    out
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != 3 * width * height {
            return Err(Error::ShapeMismatch(format!(
                "pixel buffer has {} bytes, expected {}",
                pixels.len(),
                3 * width * height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mirrors the image around its vertical axis.
    pub fn flipped(&self) -> ImageRaster {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub image: String,
    pub sequence_id: Option<String>,
    pub frame_index: u64,
    pub people: Vec<Pose>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> JointSchema {
        JointSchema::new(
            vec!["head".into(), "l_wrist".into(), "r_wrist".into(), "neck".into()],
            vec![(1, 2)],
            Some((0, 3)),
        )
        .unwrap()
    }

    #[test]
    fn bbox_of_two_joints() {
        let p = Pose::new(vec![Keypoint::new(0.0, 0.0), Keypoint::new(10.0, 20.0)]);
        assert_eq!(pose_bbox(&p).unwrap(), Rect::new(0.0, 0.0, 10.0, 20.0));
    }

    #[test]
    fn bbox_of_single_joint_is_degenerate() {
        let p = Pose::new(vec![Keypoint::absent(), Keypoint::new(5.0, 5.0)]);
        assert_eq!(pose_bbox(&p).unwrap(), Rect::new(5.0, 5.0, 5.0, 5.0));
    }

    #[test]
    fn bbox_requires_a_joint() {
        assert!(matches!(
            pose_bbox(&Pose::all_absent(3)),
            Err(Error::NoJointsPresent)
        ));
    }

    #[test]
    fn flip_moves_left_wrist_to_right() {
        let s = schema();
        let mut p = Pose::all_absent(4);
        p.joints[1] = Keypoint::new(10.0, 50.0);
        let f = flip_pose(&p, &s, 100.0);
        assert!(!f.joints[1].present);
        assert_eq!(f.joints[2], Keypoint::new(89.0, 50.0));
        assert_eq!(flip_pose(&f, &s, 100.0), p);
    }

    #[test]
    fn flip_of_all_absent_is_all_absent() {
        let p = Pose::all_absent(4);
        assert_eq!(flip_pose(&p, &schema(), 64.0), p);
    }

    #[test]
    fn schema_rejects_overlapping_pairs() {
        let names = vec!["a".into(), "b".into(), "c".into()];
        assert!(JointSchema::new(names.clone(), vec![(0, 1), (1, 2)], None).is_err());
        assert!(JointSchema::new(names.clone(), vec![(0, 3)], None).is_err());
        assert!(JointSchema::new(vec!["a".into(), "a".into()], vec![], None).is_err());
    }

    #[test]
    fn raster_length_checked() {
        assert!(ImageRaster::new(2, 2, vec![0; 11]).is_err());
        assert!(ImageRaster::new(2, 2, vec![0; 12]).is_ok());
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        prop::collection::vec((any::<bool>(), -500.0..500.0f64, -500.0..500.0f64), 4).prop_map(
            |js| {
                Pose::new(
                    js.into_iter()
                        .map(|(p, x, y)| if p { Keypoint::new(x, y) } else { Keypoint::absent() })
                        .collect(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(p in arb_pose(), w in 1.0..2000.0f64) {
            let s = schema();
            let back = flip_pose(&flip_pose(&p, &s, w), &s, w);
            for (a, b) in back.joints.iter().zip(&p.joints) {
                prop_assert_eq!(a.present, b.present);
                if a.present {
                    prop_assert!((a.x - b.x).abs() < 1e-9 && a.y == b.y);
                }
            }
        }

        #[test]
        fn bbox_matches_brute_force(
            coords in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 16),
            junk in prop::collection::vec((-1e6..1e6f64, -1e6..1e6f64), 4),
        ) {
            let mut joints: Vec<_> = coords.iter().map(|&(x, y)| Keypoint::new(x, y)).collect();
            // absent joints with arbitrary stale coordinates must not count
            joints.extend(junk.iter().map(|&(x, y)| Keypoint { x, y, present: false, score: None }));
            joints.reverse();
            let r = pose_bbox(&Pose::new(joints)).unwrap();
            let mut x1 = f64::INFINITY; let mut y1 = f64::INFINITY;
            let mut x2 = f64::NEG_INFINITY; let mut y2 = f64::NEG_INFINITY;
            for &(x, y) in &coords {
                if x < x1 { x1 = x; }
                if y < y1 { y1 = y; }
                if x > x2 { x2 = x; }
                if y > y2 { y2 = y; }
            }
            prop_assert_eq!(r, Rect::new(x1, y1, x2, y2));
        }
    }
}
