use std::fmt::Write;

use super::Dataset;
use crate::error::{Error, Result};
use crate::types::{Keypoint, Pose};

fn num(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::Numeric(format!("cannot serialize non-finite value {v}")));
    }
    Ok(format!("{v:.6}"))
}

fn string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn joint(k: &Keypoint) -> Result<String> {
    if !k.present {
        return Ok(r#"{"present": false}"#.to_string());
    }
    let mut s = String::from(r#"{"present": true, "#);
    if let Some(score) = k.score {
        write!(s, r#""score": {}, "#, num(score)?).unwrap();
    }
    write!(s, r#""x": {}, "y": {}}}"#, num(k.x)?, num(k.y)?).unwrap();
    Ok(s)
}

fn person(out: &mut String, p: &Pose, indent: &str) -> Result<()> {
    let inner = format!("{indent}  ");
    let mut fields = Vec::new();
    if let Some(b) = p.head_box {
        fields.push(format!(
            r#"{inner}"head_box": [{}, {}, {}, {}]"#,
            num(b.x1)?,
            num(b.y1)?,
            num(b.x2)?,
            num(b.y2)?
        ));
    }
    if let Some(h) = p.height_px {
        fields.push(format!(r#"{inner}"height_px": {}"#, num(h)?));
    }
    let joints = p
        .joints
        .iter()
        .map(|k| joint(k).map(|j| format!("{inner}  {j}")))
        .collect::<Result<Vec<_>>>()?;
    if joints.is_empty() {
        fields.push(format!(r#"{inner}"joints": []"#));
    } else {
        fields.push(format!(
            "{inner}\"joints\": [\n{}\n{inner}]",
            joints.join(",\n")
        ));
    }
    if let Some(t) = p.top_head_hint {
        fields.push(format!(r#"{inner}"top_head": [{}, {}]"#, num(t.x)?, num(t.y)?));
    }
    if let Some(id) = p.track_id {
        fields.push(format!(r#"{inner}"track_id": {id}"#));
    }
    write!(out, "{indent}{{\n{}\n{indent}}}", fields.join(",\n")).unwrap();
    Ok(())
}

pub(super) fn write(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = String::from("{\n");
    if ds.frames.is_empty() {
        out.push_str("  \"frames\": [],\n");
    } else {
        out.push_str("  \"frames\": [\n");
        for (fi, f) in ds.frames.iter().enumerate() {
            out.push_str("    {\n");
            writeln!(out, "      \"frame_index\": {},", f.frame_index).unwrap();
            writeln!(out, "      \"image\": {},", string(&f.image)).unwrap();
            if f.people.is_empty() {
                out.push_str("      \"people\": []");
            } else {
                out.push_str("      \"people\": [\n");
                for (pi, p) in f.people.iter().enumerate() {
                    person(&mut out, p, "        ")?;
                    out.push_str(if pi + 1 < f.people.len() { ",\n" } else { "\n" });
                }
                out.push_str("      ]");
            }
            if let Some(s) = &f.sequence_id {
                write!(out, ",\n      \"sequence_id\": {}", string(s)).unwrap();
            }
            out.push_str("\n    }");
            out.push_str(if fi + 1 < ds.frames.len() { ",\n" } else { "\n" });
        }
        out.push_str("  ],\n");
    }
    let s = &ds.schema;
    out.push_str("  \"schema\": {\n");
    let pairs: Vec<String> = s
        .flip_pairs()
        .iter()
        .map(|(a, b)| format!("[{a}, {b}]"))
        .collect();
    writeln!(out, "    \"flip_pairs\": [{}],", pairs.join(", ")).unwrap();
    if let Some((t, b)) = s.head_pair() {
        writeln!(out, "    \"head_pair\": [{t}, {b}],").unwrap();
    }
    let names: Vec<String> = s.names().iter().map(|n| string(n)).collect();
    writeln!(out, "    \"joints\": [{}]", names.join(", ")).unwrap();
    out.push_str("  }\n}\n");
    Ok(out.into_bytes())
}
