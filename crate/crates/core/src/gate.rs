//! Radar-based suppression of ghost detections: a detection survives only if
//! its padded box contains enough radar targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_contains_point, pad_box, Detection, RadarTargetList};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    /// Padding added to every box dimension, metres.
    pub gamma: f64,
    /// Minimum number of contained targets.
    pub require_count: usize,
    /// Test targets at the box's center height, for radars without usable
    /// elevation.
    pub snap_target_z: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            require_count: 1,
            snap_target_z: false,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("{} must be >= 0", self.gamma)));
        }
        if self.require_count < 1 {
            return Err(Error::invalid("require_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// Number of radar targets inside the padded box of `det`.
pub fn supporting_targets(det: &Detection, radar: &RadarTargetList, cfg: &GateConfig) -> Result<usize> {
    let padded = pad_box(&det.bbox, cfg.gamma)?;
    Ok(radar
        .targets()
        .iter()
        .filter(|t| {
            let z = if cfg.snap_target_z { padded.z } else { t.z };
            box_contains_point(&padded, [t.x, t.y, z])
        })
        .count())
}

/// Survival flag per detection.
pub fn gate_mask(dets: &[Detection], radar: &RadarTargetList, cfg: &GateConfig) -> Result<Vec<bool>> {
    cfg.validate()?;
    dets.iter()
        .map(|d| Ok(supporting_targets(d, radar, cfg)? >= cfg.require_count))
        .collect()
}

/// Keep detections supported by at least `require_count` targets; order and
/// contents of the survivors are unchanged. One target may support several
/// detections.
pub fn gate_detections(
    dets: &[Detection],
    radar: &RadarTargetList,
    cfg: &GateConfig,
) -> Result<Vec<Detection>> {
    let mask = gate_mask(dets, radar, cfg)?;
    Ok(crate::geometry::select(dets, &mask))
}
