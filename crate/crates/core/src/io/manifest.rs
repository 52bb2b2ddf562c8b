use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{
    check_len, Box3D, Detection, PointCloud, PointLabelArray, RadarTargetList, ScoreArray,
};

use super::{
    read_cloud_bin, read_detections_jsonl, read_gt_jsonl, read_labels, read_radar_csv, read_scores,
    write_atomic, write_cloud_bin, write_detections_jsonl, write_gt_jsonl, write_labels, write_radar_csv,
    write_scores, DetectionGroups, LabelRemap,
};

/// One synchronized LiDAR/radar snapshot with its annotations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameBundle {
    pub frame_id: String,
    pub cloud: PointCloud,
    pub labels: Option<PointLabelArray>,
    pub scores: Option<ScoreArray>,
    pub gt_boxes: Vec<Box3D>,
    pub detections: Option<Vec<Detection>>,
    pub radar: Option<RadarTargetList>,
}

impl FrameBundle {
    pub fn new(frame_id: impl Into<String>, cloud: PointCloud) -> Self {
        Self {
            frame_id: frame_id.into(),
            cloud,
            ..Default::default()
        }
    }

    /// Optional per-point arrays must match the cloud length.
    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            check_len("labels", self.cloud.len(), labels.len())?;
        }
        if let Some(scores) = &self.scores {
            check_len("scores", self.cloud.len(), scores.len())?;
        }
        Ok(())
    }

    /// Keep only the masked points, along with their labels and scores.
    pub fn retain_points(&self, mask: &[bool]) -> Result<FrameBundle> {
        Ok(FrameBundle {
            frame_id: self.frame_id.clone(),
            cloud: self.cloud.select(mask)?,
            labels: self.labels.as_ref().map(|l| l.select(mask)).transpose()?,
            scores: self.scores.as_ref().map(|s| s.select(mask)).transpose()?,
            gt_boxes: self.gt_boxes.clone(),
            detections: self.detections.clone(),
            radar: self.radar.clone(),
        })
    }

    /// Write every present artifact under `root/subdir/` and return the
    /// manifest record (paths relative to `root`).
    pub fn save(&self, root: &Path, subdir: &str) -> Result<FrameRecord> {
        self.validate()?;
        let rel = |ext: &str| PathBuf::from(subdir).join(format!("{}.{ext}", self.frame_id));
        let cloud = rel("bin");
        write_cloud_bin(root.join(&cloud), &self.cloud)?;
        let mut record = FrameRecord {
            frame_id: self.frame_id.clone(),
            cloud,
            ..Default::default()
        };
        if let Some(labels) = &self.labels {
            let p = rel("label");
            write_labels(root.join(&p), labels)?;
            record.labels = Some(p);
        }
        if let Some(scores) = &self.scores {
            let p = rel("score");
            write_scores(root.join(&p), scores)?;
            record.scores = Some(p);
        }
        let p = rel("gt.jsonl");
        write_gt_jsonl(root.join(&p), &self.frame_id, &self.gt_boxes)?;
        record.gt = Some(p);
        if let Some(dets) = &self.detections {
            let p = rel("det.jsonl");
            let mut groups = DetectionGroups::new();
            groups.insert(self.frame_id.clone(), dets.clone());
            write_detections_jsonl(root.join(&p), &groups)?;
            record.detections = Some(p);
        }
        if let Some(radar) = &self.radar {
            let p = rel("radar.csv");
            write_radar_csv(root.join(&p), radar)?;
            record.radar = Some(p);
        }
        Ok(record)
    }
}

/// Files making up one frame, relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_id: String,
    pub cloud: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radar: Option<PathBuf>,
}

impl FrameRecord {
    /// Every referenced file, cloud first.
    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.cloud).chain(
            [
                &self.labels,
                &self.scores,
                &self.gt,
                &self.detections,
                &self.radar,
            ]
            .into_iter()
            .flatten(),
        )
    }
}

/// Ordered list of frames, stored as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub frames: Vec<FrameRecord>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn new(root: impl Into<PathBuf>, frames: Vec<FrameRecord>) -> Self {
        Self {
            frames,
            root: root.into(),
        }
    }

    /// Load a manifest; every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = super::read_bytes(path)?;
        let mut manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for rec in &manifest.frames {
            for p in rec.paths() {
                let full = manifest.root.join(p);
                if !full.is_file() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                    ));
                }
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn load_frame(&self, i: usize, remap: &LabelRemap) -> Result<FrameBundle> {
        let rec = &self.frames[i];
        let at = |p: &PathBuf| self.root.join(p);
        let cloud = read_cloud_bin(at(&rec.cloud))?;
        let n = cloud.len();
        let labels = rec
            .labels
            .as_ref()
            .map(|p| read_labels(at(p), remap, Some(n)).map(|(l, _)| l))
            .transpose()?;
        let scores = rec
            .scores
            .as_ref()
            .map(|p| read_scores(at(p), Some(n)))
            .transpose()?;
        let gt_boxes = match &rec.gt {
            Some(p) => frame_entries(read_gt_jsonl(at(p))?, &rec.frame_id, at(p))?,
            None => Vec::new(),
        };
        let detections = rec
            .detections
            .as_ref()
            .map(|p| frame_entries(read_detections_jsonl(at(p))?, &rec.frame_id, at(p)))
            .transpose()?;
        let radar = rec.radar.as_ref().map(|p| read_radar_csv(at(p))).transpose()?;
        let bundle = FrameBundle {
            frame_id: rec.frame_id.clone(),
            cloud,
            labels,
            scores,
            gt_boxes,
            detections,
            radar,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Load every frame; distinct files are read concurrently.
    pub fn load_all(&self, remap: &LabelRemap, mode: ExecMode) -> Result<Vec<FrameBundle>> {
        let ids: Vec<usize> = (0..self.frames.len()).collect();
        exec::try_map_slice(mode, &ids, |&i| self.load_frame(i, remap))
    }
}

/// A per-frame file may only hold entries for its own frame.
fn frame_entries<T>(
    mut groups: indexmap::IndexMap<String, Vec<T>>,
    frame_id: &str,
    path: PathBuf,
) -> Result<Vec<T>> {
    let entries = groups.shift_remove(frame_id).unwrap_or_default();
    if let Some(other) = groups.keys().next() {
        return Err(Error::Parse {
            path,
            line: 0,
            reason: format!("entries for frame {other:?} in file of frame {frame_id:?}"),
        });
    }
    Ok(entries)
}
