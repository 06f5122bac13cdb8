//! Annotation and prediction files.
//!
//! Files are UTF-8 JSON:
//!
//! ```text
//! {"schema": {"joints": [...], "flip_pairs": [[i, j], ...], "head_pair": [t, b]},
//!  "frames": [{"image": "path", "sequence_id": "s", "frame_index": k,
//!              "people": [{"track_id": 3, "head_box": [x1, y1, x2, y2], "height_px": 340.0,
//!                          "top_head": [x, y],
//!                          "joints": [{"present": true, "x": 1.0, "y": 2.0, "score": 0.9}, ...]}]}]}
//! ```
//!
//! Unknown keys are ignored on input. Output is canonical: keys sorted,
//! floats printed with six decimals, so writing a parsed file reproduces it
//! byte for byte.

mod mapping;
mod writer;

pub use mapping::{builtin_mapping, builtin_schema, remap_schema, MappingRule, SchemaMapping};

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::types::{FrameAnnotation, JointSchema, Keypoint, Point, Pose, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: JointSchema,
    pub frames: Vec<FrameAnnotation>,
}

impl Dataset {
    pub fn new(schema: JointSchema, frames: Vec<FrameAnnotation>) -> Result<Self> {
        let ds = Self { schema, frames };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut last: BTreeMap<&str, u64> = BTreeMap::new();
        for (fi, frame) in self.frames.iter().enumerate() {
            for (pi, pose) in frame.people.iter().enumerate() {
                pose.validate(&self.schema).map_err(|e| match e {
                    Error::SchemaMismatch(m) => {
                        Error::SchemaMismatch(format!("frame {fi}, person {pi}: {m}"))
                    }
                    other => other,
                })?;
            }
            if let Some(seq) = frame.sequence_id.as_deref() {
                if let Some(&prev) = last.get(seq) {
                    if frame.frame_index <= prev {
                        return Err(Error::Data(format!(
                            "frame_index {} does not increase within sequence {seq:?}",
                            frame.frame_index
                        )));
                    }
                }
                last.insert(seq, frame.frame_index);
            }
        }
        Ok(())
    }

    /// Frame indices (positions in `frames`) grouped by sequence id, in file
    /// order. Frames without a sequence id are not listed.
    pub fn sequences(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, f) in self.frames.iter().enumerate() {
            if let Some(s) = &f.sequence_id {
                out.entry(s.clone()).or_default().push(i);
            }
        }
        out
    }

    pub fn pose_count(&self) -> usize {
        self.frames.iter().map(|f| f.people.len()).sum()
    }
}

#[derive(Deserialize)]
struct RawFile {
    schema: RawSchema,
    #[serde(default)]
    frames: Vec<RawFrame>,
}

#[derive(Deserialize)]
pub(crate) struct RawSchema {
    joints: Vec<String>,
    #[serde(default)]
    flip_pairs: Vec<[usize; 2]>,
    #[serde(default)]
    head_pair: Option<[usize; 2]>,
}

impl RawSchema {
    pub(crate) fn into_schema(self) -> Result<JointSchema> {
        JointSchema::new(
            self.joints,
            self.flip_pairs.into_iter().map(|[a, b]| (a, b)).collect(),
            self.head_pair.map(|[a, b]| (a, b)),
        )
    }
}

#[derive(Deserialize)]
struct RawFrame {
    image: String,
    #[serde(default)]
    sequence_id: Option<String>,
    frame_index: u64,
    #[serde(default)]
    people: Vec<RawPerson>,
}

#[derive(Deserialize)]
struct RawPerson {
    #[serde(default)]
    track_id: Option<u64>,
    #[serde(default)]
    head_box: Option<[f64; 4]>,
    #[serde(default)]
    height_px: Option<f64>,
    #[serde(default)]
    top_head: Option<[f64; 2]>,
    joints: Vec<RawJoint>,
}

#[derive(Deserialize)]
struct RawJoint {
    present: bool,
    #[serde(default)]
    x: Option<f64>,
    #[serde(default)]
    y: Option<f64>,
    #[serde(default)]
    score: Option<f64>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        context: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

pub(crate) fn parse_schema_json(text: &str) -> Result<JointSchema> {
    serde_json::from_str::<RawSchema>(text)
        .map_err(json_error)?
        .into_schema()
}

/// Parses an annotation or prediction file.
pub fn parse_annotations(bytes: &[u8]) -> Result<Dataset> {
    let raw: RawFile = serde_json::from_slice(bytes).map_err(json_error)?;
    let schema = raw.schema.into_schema()?;
    let n = schema.len();
    let mut frames = Vec::with_capacity(raw.frames.len());
    for (fi, rf) in raw.frames.into_iter().enumerate() {
        let mut people = Vec::with_capacity(rf.people.len());
        for (pi, rp) in rf.people.into_iter().enumerate() {
            if rp.joints.len() != n {
                return Err(Error::SchemaMismatch(format!(
                    "frames[{fi}].people[{pi}] has {} joints, schema expects {n}",
                    rp.joints.len()
                )));
            }
            let mut joints = Vec::with_capacity(n);
            for (ji, rj) in rp.joints.into_iter().enumerate() {
                let kp = if rj.present {
                    match (rj.x, rj.y) {
                        (Some(x), Some(y)) => Keypoint {
                            x,
                            y,
                            present: true,
                            score: rj.score,
                        },
                        _ => {
                            return Err(Error::Parse {
                                context: format!("frames[{fi}].people[{pi}].joints[{ji}]"),
                                message: "present joint without x/y".into(),
                            })
                        }
                    }
                } else {
                    Keypoint::absent()
                };
                joints.push(kp);
            }
            people.push(Pose {
                joints,
                head_box: rp.head_box.map(|[a, b, c, d]| Rect::new(a, b, c, d)),
                height_px: rp.height_px,
                track_id: rp.track_id,
                top_head_hint: rp.top_head.map(|[x, y]| Point::new(x, y)),
            });
        }
        frames.push(FrameAnnotation {
            image: rf.image,
            sequence_id: rf.sequence_id,
            frame_index: rf.frame_index,
            people,
        });
    }
    Dataset::new(schema, frames)
}

/// Serializes a dataset in canonical form. Scores are written when present
/// and are not required.
pub fn write_annotations(dataset: &Dataset) -> Result<Vec<u8>> {
    writer::write(dataset)
}

/// Like [`write_annotations`] but every present joint must carry a score.
pub fn write_predictions(dataset: &Dataset) -> Result<Vec<u8>> {
    for (fi, frame) in dataset.frames.iter().enumerate() {
        for (pi, pose) in frame.people.iter().enumerate() {
            if let Some(ji) = pose
                .joints
                .iter()
                .position(|k| k.present && k.score.is_none())
            {
                return Err(Error::MissingScore {
                    frame: fi,
                    person: pi,
                    joint: ji,
                });
            }
        }
    }
    writer::write(dataset)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_annotations(&std::fs::read(path)?)
}
