//! Annotation JSON codec.
//!
//! The writer is hand rolled so the byte layout is canonical: fixed key order,
//! one point per line and every float printed with 17 significant digits,
//! which is enough to round-trip any f64 exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use super::{AnnotatedMotion, AnnotatedPart, Annotation};
use crate::cloud::{PointCloud, Vec3};
use crate::error::{Error, Result};
use crate::kinematics::{AxisLine, MotionType};

pub const INDEX_FILE: &str = "index.json";

fn float(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn vec3(out: &mut String, v: &Vec3) {
    out.push('[');
    float(out, v.x);
    out.push_str(", ");
    float(out, v.y);
    out.push_str(", ");
    float(out, v.z);
    out.push(']');
}

fn vec3_list(out: &mut String, key: &str, vs: &[Vec3]) {
    let _ = write!(out, "  \"{key}\": [\n");
    for (i, v) in vs.iter().enumerate() {
        out.push_str("    ");
        vec3(out, v);
        out.push_str(if i + 1 < vs.len() { ",\n" } else { "\n" });
    }
    out.push_str("  ]");
}

/// Serialises a valid annotation.
pub fn write_annotation(ann: &Annotation) -> Result<String> {
    write_document(ann, &[])
}

/// Serialises an annotation followed by extra top-level members (in the given order).
pub fn write_document(ann: &Annotation, extra: &[(&str, &Value)]) -> Result<String> {
    ann.validate()?;
    let mut out = String::new();
    out.push_str("{\n");
    let id = serde_json::to_string(&ann.shape_id).map_err(|e| Error::Parse(e.to_string()))?;
    let _ = write!(out, "  \"shape_id\": {id},\n");
    vec3_list(&mut out, "points", ann.cloud.points());
    if let Some(ns) = ann.cloud.normals() {
        out.push_str(",\n");
        vec3_list(&mut out, "normals", ns);
    }
    out.push_str(",\n  \"parts\": [");
    for (pi, part) in ann.parts.iter().enumerate() {
        out.push_str(if pi == 0 { "\n" } else { ",\n" });
        out.push_str("    {\n      \"indices\": [");
        for (k, i) in part.indices.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            let _ = write!(out, "{i}");
        }
        out.push_str("],\n      \"motions\": [");
        for (mi, m) in part.motions.iter().enumerate() {
            out.push_str(if mi == 0 { "\n" } else { ",\n" });
            let _ = write!(
                out,
                "        {{\"type\": \"{}\", \"anchor\": ",
                m.motion_type.code()
            );
            vec3(&mut out, &m.line.point);
            out.push_str(", \"direction\": ");
            vec3(&mut out, &m.line.direction);
            out.push('}');
        }
        out.push_str(if part.motions.is_empty() {
            "]\n    }"
        } else {
            "\n      ]\n    }"
        });
    }
    out.push_str(if ann.parts.is_empty() { "]" } else { "\n  ]" });
    for (key, value) in extra {
        let key = serde_json::to_string(key).map_err(|e| Error::Parse(e.to_string()))?;
        let body = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
        let _ = write!(out, ",\n  {key}: {}", body.replace('\n', "\n  "));
    }
    out.push_str("\n}\n");
    Ok(out)
}

fn field<'a>(obj: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    let map = obj.as_object().ok_or_else(|| Error::Schema {
        field: display_path(path).to_string(),
        message: "expected an object".into(),
    })?;
    map.get(key).ok_or_else(|| {
        let full = if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        };
        Error::MissingField(full)
    })
}

fn display_path(path: &str) -> &str {
    if path.is_empty() {
        "document"
    } else {
        path
    }
}

fn array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| Error::Schema {
        field: path.to_string(),
        message: "expected an array".into(),
    })
}

fn number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::Schema {
        field: path.to_string(),
        message: "expected a number".into(),
    })
}

fn parse_vec3(v: &Value, path: &str) -> Result<Vec3> {
    let a = array(v, path)?;
    if a.len() != 3 {
        return Err(Error::Schema {
            field: path.to_string(),
            message: format!("expected 3 coordinates, found {}", a.len()),
        });
    }
    Ok(Vec3::new(
        number(&a[0], &format!("{path}[0]"))?,
        number(&a[1], &format!("{path}[1]"))?,
        number(&a[2], &format!("{path}[2]"))?,
    ))
}

fn parse_vec3_list(v: &Value, path: &str) -> Result<Vec<Vec3>> {
    array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, p)| parse_vec3(p, &format!("{path}[{i}]")))
        .collect()
}

/// Parses an annotation document (unknown top-level keys are ignored).
pub fn read_annotation(bytes: &[u8]) -> Result<Annotation> {
    let doc: Value =
        serde_json::from_slice(bytes).map_err(|e| Error::Parse(format!("malformed JSON: {e}")))?;
    parse_annotation(&doc)
}

/// Builds an annotation from an already parsed JSON value.
pub fn parse_annotation(doc: &Value) -> Result<Annotation> {
    let shape_id = field(doc, "shape_id", "")?
        .as_str()
        .ok_or_else(|| Error::Schema {
            field: "shape_id".into(),
            message: "expected a string".into(),
        })?
        .to_string();
    let points = parse_vec3_list(field(doc, "points", "")?, "points")?;
    let normals = match doc.get("normals") {
        None | Some(Value::Null) => None,
        Some(v) => Some(parse_vec3_list(v, "normals")?),
    };
    let parts_v = array(field(doc, "parts", "")?, "parts")?;
    let mut parts = Vec::with_capacity(parts_v.len());
    for (pi, pv) in parts_v.iter().enumerate() {
        let path = format!("parts[{pi}]");
        let indices = array(field(pv, "indices", &path)?, &format!("{path}.indices"))?
            .iter()
            .enumerate()
            .map(|(k, x)| {
                x.as_u64().map(|u| u as usize).ok_or_else(|| Error::Schema {
                    field: format!("{path}.indices[{k}]"),
                    message: "expected a non-negative integer".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let motions_v = array(field(pv, "motions", &path)?, &format!("{path}.motions"))?;
        let mut motions = Vec::with_capacity(motions_v.len());
        for (mi, mv) in motions_v.iter().enumerate() {
            let mpath = format!("{path}.motions[{mi}]");
            let code = field(mv, "type", &mpath)?
                .as_str()
                .ok_or_else(|| Error::Schema {
                    field: format!("{mpath}.type"),
                    message: "expected a string".into(),
                })?;
            let motion_type = MotionType::from_code(code).ok_or_else(|| Error::Schema {
                field: format!("{mpath}.type"),
                message: format!("unknown motion type '{code}'"),
            })?;
            let point = parse_vec3(field(mv, "anchor", &mpath)?, &format!("{mpath}.anchor"))?;
            let direction = parse_vec3(
                field(mv, "direction", &mpath)?,
                &format!("{mpath}.direction"),
            )?;
            motions.push(AnnotatedMotion {
                motion_type,
                line: AxisLine { point, direction },
            });
        }
        parts.push(AnnotatedPart { indices, motions });
    }
    let cloud = PointCloud::new(points, normals).map_err(|e| Error::Validation {
        field: "points".into(),
        message: e.to_string(),
    })?;
    let ann = Annotation {
        shape_id,
        cloud,
        parts,
    };
    ann.validate()?;
    Ok(ann)
}

pub fn write_dataset_index(dir: &Path, ids: &[String]) -> Result<()> {
    let body = serde_json::to_string_pretty(&serde_json::json!({ "shape_ids": ids }))
        .map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(dir.join(INDEX_FILE), body + "\n")?;
    Ok(())
}

pub fn read_dataset_index(dir: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(dir.join(INDEX_FILE))?;
    let doc: Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Parse(format!("malformed index: {e}")))?;
    array(field(&doc, "shape_ids", "")?, "shape_ids")?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str().map(str::to_string).ok_or_else(|| Error::Schema {
                field: format!("shape_ids[{i}]"),
                message: "expected a string".into(),
            })
        })
        .collect()
}
