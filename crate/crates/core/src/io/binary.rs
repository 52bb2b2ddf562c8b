use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointClass, PointCloud, PointLabelArray, ScoreArray};

use super::{read_bytes, write_atomic};

const F32: usize = 4;

fn f32_records(path: &Path, bytes: &[u8], per_record: usize) -> Result<Vec<f32>> {
    let record = per_record * F32;
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::Truncated {
            path: path.to_owned(),
            len: bytes.len() as u64,
            record,
        });
    }
    Ok(bytes
        .chunks_exact(F32)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Read a cloud stored as consecutive `(x, y, z, intensity)` f32 records.
pub fn read_cloud_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    read_cloud_bin_channels(path, PointCloud::CHANNELS)
}

/// Read a cloud whose records carry `channels >= 4` floats; channels past the
/// fourth are dropped.
pub fn read_cloud_bin_channels(path: impl AsRef<Path>, channels: usize) -> Result<PointCloud> {
    let path = path.as_ref();
    if channels < PointCloud::CHANNELS {
        return Err(Error::invalid("channels", format!("{channels} < 4")));
    }
    let values = f32_records(path, &read_bytes(path)?, channels)?;
    if channels > PointCloud::CHANNELS {
        log::warn!(
            "{}: dropping {} extra channel(s) per point",
            path.display(),
            channels - PointCloud::CHANNELS
        );
    }
    let points: Vec<Point> = values
        .chunks_exact(channels)
        .map(|r| Point::new(r[0], r[1], r[2], r[3]))
        .collect();
    PointCloud::new(points)
}

pub fn write_cloud_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path.as_ref(), &bytes)
}

/// Maps raw dataset label codes onto the three classes; unmapped codes are
/// background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRemap {
    map: HashMap<u32, PointClass>,
}

impl Default for LabelRemap {
    fn default() -> Self {
        Self::identity()
    }
}

impl LabelRemap {
    pub fn identity() -> Self {
        Self::from_pairs([
            (0, PointClass::Background),
            (1, PointClass::Vehicle),
            (2, PointClass::Spray),
        ])
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, PointClass)>) -> Self {
        Self {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, code: u32) -> Option<PointClass> {
        self.map.get(&code).copied()
    }
}

/// Read u32 label codes. Returns the remapped labels and how many codes were
/// unknown (and mapped to background).
pub fn read_labels(
    path: impl AsRef<Path>,
    remap: &LabelRemap,
    expected_len: Option<usize>,
) -> Result<(PointLabelArray, usize)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Truncated {
            path: path.to_owned(),
            len: bytes.len() as u64,
            record: 4,
        });
    }
    let n = bytes.len() / 4;
    if let Some(expected) = expected_len {
        crate::geometry::check_len("labels", expected, n)?;
    }
    let mut unknown = 0;
    let labels = bytes
        .chunks_exact(4)
        .map(|c| {
            let code = u32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            remap.get(code).unwrap_or_else(|| {
                unknown += 1;
                PointClass::Background
            })
        })
        .collect();
    if unknown > 0 {
        log::warn!(
            "{}: {unknown} unknown label code(s) mapped to background",
            path.display()
        );
    }
    Ok((PointLabelArray::new(labels), unknown))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &PointLabelArray) -> Result<()> {
    let bytes: Vec<u8> = labels
        .as_slice()
        .iter()
        .flat_map(|c| c.code().to_le_bytes())
        .collect();
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_scores(path: impl AsRef<Path>, expected_len: Option<usize>) -> Result<ScoreArray> {
    let path = path.as_ref();
    let scores = f32_records(path, &read_bytes(path)?, 1)?;
    if let Some(expected) = expected_len {
        crate::geometry::check_len("scores", expected, scores.len())?;
    }
    ScoreArray::new(scores)
}

pub fn write_scores(path: impl AsRef<Path>, scores: &ScoreArray) -> Result<()> {
    let bytes: Vec<u8> = scores.as_slice().iter().flat_map(|s| s.to_le_bytes()).collect();
    write_atomic(path.as_ref(), &bytes)
}

/// Keep masks are one byte per point, 0 or 1.
pub fn write_mask(path: impl AsRef<Path>, mask: &[bool]) -> Result<()> {
    let bytes: Vec<u8> = mask.iter().map(|&k| k as u8).collect();
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Vec<bool>> {
    let path = path.as_ref();
    read_bytes(path)?
        .into_iter()
        .enumerate()
        .map(|(i, b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Parse {
                path: path.to_owned(),
                line: i,
                reason: format!("mask byte {b} is not 0 or 1"),
            }),
        })
        .collect()
}
