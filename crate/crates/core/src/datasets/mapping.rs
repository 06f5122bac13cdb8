//! Joint-schema remapping.
//!
//! A mapping assigns every target joint one rule. Rules nest, so the
//! bottom-of-head estimate for COCO-style poses (midpoint of the nose and of
//! the shoulder midpoint) is a `midpoint` of a copy and another `midpoint`.
//!
//! Mapping files name joints, not indices:
//!
//! ```text
//! {"source": "mpii16", "target": "posetrack15",
//!  "rules": {"nose": {"midpoint": ["head_top", "upper_neck"]}, "head_top": "head_top", "neck": null, ...}}
//! ```
//!
//! `source`/`target` are built-in schema names or inline schema objects.

use serde_json::Value;

use super::{parse_schema_json, RawSchema};
use crate::error::{Error, Result};
use crate::types::{JointSchema, Keypoint, Pose};

#[derive(Debug, Clone, PartialEq)]
pub enum MappingRule {
    Copy(usize),
    Midpoint(Box<MappingRule>, Box<MappingRule>),
    /// The pose's precomputed top-of-head point.
    TopHeadHint,
    Absent,
}

impl MappingRule {
    fn apply(&self, pose: &Pose) -> Keypoint {
        match self {
            MappingRule::Copy(i) => pose.joints[*i],
            MappingRule::Midpoint(a, b) => {
                let (ka, kb) = (a.apply(pose), b.apply(pose));
                if !(ka.present && kb.present) {
                    return Keypoint::absent();
                }
                let m = ka.point().midpoint(kb.point());
                Keypoint {
                    x: m.x,
                    y: m.y,
                    present: true,
                    score: ka.score.zip(kb.score).map(|(a, b)| a.min(b)),
                }
            }
            MappingRule::TopHeadHint => match pose.top_head_hint {
                Some(p) => Keypoint::new(p.x, p.y),
                None => Keypoint::absent(),
            },
            MappingRule::Absent => Keypoint::absent(),
        }
    }

    fn parse(v: &Value, source: &JointSchema) -> Result<Self> {
        let bad = |msg: String| Error::Parse {
            context: "mapping rule".into(),
            message: msg,
        };
        match v {
            Value::Null => Ok(MappingRule::Absent),
            Value::String(name) => source
                .index_of(name)
                .map(MappingRule::Copy)
                .ok_or_else(|| bad(format!("unknown source joint {name:?}"))),
            Value::Object(m) if m.len() == 1 => {
                if let Some(Value::Array(parts)) = m.get("midpoint") {
                    if parts.len() != 2 {
                        return Err(bad("midpoint takes exactly two rules".into()));
                    }
                    Ok(MappingRule::Midpoint(
                        Box::new(Self::parse(&parts[0], source)?),
                        Box::new(Self::parse(&parts[1], source)?),
                    ))
                } else if m.get("hint").and_then(Value::as_str) == Some("top_head") {
                    Ok(MappingRule::TopHeadHint)
                } else {
                    Err(bad(format!("unrecognized rule {v}")))
                }
            }
            _ => Err(bad(format!("unrecognized rule {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaMapping {
    pub source: JointSchema,
    pub target: JointSchema,
    pub rules: Vec<MappingRule>,
}

impl SchemaMapping {
    pub fn new(source: JointSchema, target: JointSchema, rules: Vec<MappingRule>) -> Result<Self> {
        if rules.len() != target.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} rules for {} target joints",
                rules.len(),
                target.len()
            )));
        }
        Ok(Self {
            source,
            target,
            rules,
        })
    }

    pub fn identity(schema: &JointSchema) -> Self {
        Self {
            source: schema.clone(),
            target: schema.clone(),
            rules: (0..schema.len()).map(MappingRule::Copy).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let schema_of = |key: &str| -> Result<JointSchema> {
            match v.get(key) {
                Some(Value::String(name)) => builtin_schema(name),
                Some(obj @ Value::Object(_)) => serde_json::from_value::<RawSchema>(obj.clone())
                    .map_err(|e| Error::Parse {
                        context: key.into(),
                        message: e.to_string(),
                    })?
                    .into_schema(),
                _ => Err(Error::Parse {
                    context: key.into(),
                    message: "expected schema name or object".into(),
                }),
            }
        };
        let source = schema_of("source")?;
        let target = schema_of("target")?;
        let rules_obj = v.get("rules").and_then(Value::as_object).ok_or(Error::Parse {
            context: "rules".into(),
            message: "expected object".into(),
        })?;
        for key in rules_obj.keys() {
            if target.index_of(key).is_none() {
                return Err(Error::SchemaMismatch(format!("rule for unknown target joint {key:?}")));
            }
        }
        let rules = target
            .names()
            .iter()
            .map(|name| {
                let rule = rules_obj.get(name).ok_or_else(|| {
                    Error::SchemaMismatch(format!("no rule for target joint {name:?}"))
                })?;
                MappingRule::parse(rule, &source)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(source, target, rules)
    }

    pub fn remap(&self, pose: &Pose) -> Pose {
        Pose {
            joints: self.rules.iter().map(|r| r.apply(pose)).collect(),
            ..pose.clone()
        }
    }
}

/// Remaps one pose; thin wrapper over [`SchemaMapping::remap`].
pub fn remap_schema(pose: &Pose, mapping: &SchemaMapping) -> Pose {
    mapping.remap(pose)
}

const SCHEMAS: &[(&str, &str)] = &[
    ("posetrack15", include_str!("../../data/schemas/posetrack15.json")),
    ("mpii16", include_str!("../../data/schemas/mpii16.json")),
    ("coco17", include_str!("../../data/schemas/coco17.json")),
];

const MAPPINGS: &[(&str, &str)] = &[
    (
        "mpii16_to_posetrack15",
        include_str!("../../data/mappings/mpii16_to_posetrack15.json"),
    ),
    (
        "coco17_to_posetrack15",
        include_str!("../../data/mappings/coco17_to_posetrack15.json"),
    ),
];

pub fn builtin_schema(name: &str) -> Result<JointSchema> {
    let (_, text) = SCHEMAS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown built-in schema {name:?}")))?;
    parse_schema_json(text)
}

pub fn builtin_mapping(name: &str) -> Result<SchemaMapping> {
    let (_, text) = MAPPINGS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown built-in mapping {name:?}")))?;
    SchemaMapping::from_json(text)
}
