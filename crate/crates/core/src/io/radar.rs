use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{RadarTarget, RadarTargetList};

use super::write_atomic;

const HEADER: [&str; 4] = ["x", "y", "z", "v"];

/// Read a `x,y,z,v` CSV of radar targets.
pub fn read_radar_csv(path: impl AsRef<Path>) -> Result<RadarTargetList> {
    let path = path.as_ref();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_owned(),
        line,
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(0, format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    for col in HEADER {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(parse_err(1, format!("missing column {col:?}")));
        }
    }
    let mut targets = Vec::new();
    for (i, row) in reader.deserialize::<RadarTarget>().enumerate() {
        let t = row.map_err(|e| parse_err(i + 2, e.to_string()))?;
        targets.push(t);
    }
    RadarTargetList::new(targets)
}

pub fn write_radar_csv(path: impl AsRef<Path>, radar: &RadarTargetList) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    writer.write_record(HEADER).expect("in-memory write");
    for t in radar.targets() {
        writer.serialize(t).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    write_atomic(path.as_ref(), &bytes)
}
