use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, Detection, ObjectClass};

use super::{read_bytes, write_atomic};

/// Detections keyed by frame id, in order of first appearance.
pub type DetectionGroups = IndexMap<String, Vec<Detection>>;

/// One JSON-lines record. Ground-truth lines carry no confidence.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRecord {
    frame_id: String,
    x: f64,
    y: f64,
    z: f64,
    w: f64,
    l: f64,
    h: f64,
    theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    class: ObjectClass,
}

impl BoxRecord {
    fn new(frame_id: &str, b: &Box3D, confidence: Option<f64>, class: ObjectClass) -> Self {
        BoxRecord {
            frame_id: frame_id.to_owned(),
            x: b.x,
            y: b.y,
            z: b.z,
            w: b.w,
            l: b.l,
            h: b.h,
            theta: b.theta,
            confidence,
            class,
        }
    }

    fn bbox(&self) -> Result<Box3D> {
        Box3D::new(self.x, self.y, self.z, self.w, self.l, self.h, self.theta)
    }
}

fn parse_lines<T>(
    path: &Path,
    mut convert: impl FnMut(BoxRecord) -> Result<T>,
) -> Result<IndexMap<String, Vec<T>>> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: 0,
        reason: e.to_string(),
    })?;
    let mut groups: IndexMap<String, Vec<T>> = IndexMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            reason,
        };
        let rec: BoxRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let frame_id = rec.frame_id.clone();
        let item = convert(rec).map_err(|e| parse_err(e.to_string()))?;
        groups.entry(frame_id).or_default().push(item);
    }
    Ok(groups)
}

/// Read `{frame_id, x, y, z, w, l, h, theta, confidence, class}` lines.
pub fn read_detections_jsonl(path: impl AsRef<Path>) -> Result<DetectionGroups> {
    parse_lines(path.as_ref(), |rec| {
        let confidence = rec
            .confidence
            .ok_or_else(|| Error::invalid("confidence", "missing"))?;
        let mut det = Detection::new(rec.bbox()?, confidence)?;
        det.class = rec.class;
        Ok(det)
    })
}

pub fn write_detections_jsonl(path: impl AsRef<Path>, groups: &DetectionGroups) -> Result<()> {
    let mut out = String::new();
    for (frame_id, dets) in groups {
        for d in dets {
            let rec = BoxRecord::new(frame_id, &d.bbox, Some(d.confidence), d.class);
            writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes")).unwrap();
        }
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Ground-truth boxes use the detection schema without `confidence`.
pub fn read_gt_jsonl(path: impl AsRef<Path>) -> Result<IndexMap<String, Vec<Box3D>>> {
    parse_lines(path.as_ref(), |rec| {
        if rec.confidence.is_some() {
            return Err(Error::invalid("ground truth", "unexpected confidence field"));
        }
        rec.bbox()
    })
}

pub fn write_gt_jsonl(path: impl AsRef<Path>, frame_id: &str, boxes: &[Box3D]) -> Result<()> {
    let mut out = String::new();
    for b in boxes {
        let rec = BoxRecord::new(frame_id, b, None, ObjectClass::Vehicle);
        writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes")).unwrap();
    }
    write_atomic(path.as_ref(), out.as_bytes())
}
