//! Readers and writers for every on-disk artifact. All multi-byte values are
//! little-endian.

mod binary;
mod jsonl;
mod manifest;
mod radar;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use binary::{
    read_cloud_bin, read_cloud_bin_channels, read_labels, read_mask, read_scores, write_cloud_bin,
    write_labels, write_mask, write_scores, LabelRemap,
};
pub use jsonl::{
    read_detections_jsonl, read_gt_jsonl, write_detections_jsonl, write_gt_jsonl, DetectionGroups,
};
pub use manifest::{DatasetManifest, FrameBundle, FrameRecord};
pub use radar::{read_radar_csv, write_radar_csv};

use crate::error::{Error, Result};

/// Write `bytes` to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
