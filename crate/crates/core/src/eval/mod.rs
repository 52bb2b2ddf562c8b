//! Range-binned 3D average precision and the threshold / padding sweeps.

mod ap;
mod matching;
mod report;
mod sweep;

pub use ap::{average_precision, pr_curve, Interpolation, Outcome, PrPoint};
pub use matching::{match_frame, FrameMatch};
pub use report::{render_csv, render_table};
pub use sweep::{sweep_gamma, sweep_tau, GammaLevel, TauLevel, DEFAULT_GAMMA_LEVELS, DEFAULT_TPR_LEVELS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{bev_range, Box3D, Detection};
use crate::io::FrameBundle;

/// Half-open BEV range interval `[lo, hi)`, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBin {
    pub lo: f64,
    pub hi: f64,
}

impl RangeBin {
    pub const OVERALL: RangeBin = RangeBin {
        lo: 0.0,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, range: f64) -> bool {
        range >= self.lo && range < self.hi
    }

    pub fn label(&self) -> String {
        match (self.lo, self.hi.is_finite()) {
            (0.0, false) => "overall".to_owned(),
            (lo, false) => format!(">{lo}m"),
            (lo, true) => format!("{lo}-{}m", self.hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Bins reported in addition to the overall range.
    pub range_bins: Vec<RangeBin>,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.7,
            range_bins: vec![
                RangeBin { lo: 0.0, hi: 25.0 },
                RangeBin {
                    lo: 25.0,
                    hi: f64::INFINITY,
                },
            ],
            interpolation: Interpolation::AllPoint,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid(
                "iou_threshold",
                format!("{} outside (0, 1]", self.iou_threshold),
            ));
        }
        let mut bins = self.range_bins.clone();
        bins.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for b in &bins {
            if !(b.lo >= 0.0 && b.lo < b.hi) {
                return Err(Error::invalid("range_bins", format!("bad bin {b:?}")));
            }
        }
        if bins.windows(2).any(|w| w[0].hi > w[1].lo) {
            return Err(Error::invalid("range_bins", "bins overlap"));
        }
        Ok(())
    }

    /// Configured bins followed by the overall range.
    pub fn all_bins(&self) -> Vec<RangeBin> {
        let mut bins = self.range_bins.clone();
        bins.push(RangeBin::OVERALL);
        bins
    }
}

/// Results for one range bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinReport {
    pub label: String,
    pub bin: RangeBin,
    /// `None` when the bin holds no ground truth.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// False positives that overlap no ground-truth box at all.
    pub ghosts: usize,
    pub pr: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    pub bins: Vec<BinReport>,
}

impl EvalReport {
    pub fn overall(&self) -> &BinReport {
        self.bins.last().expect("report always has the overall bin")
    }

    pub fn bin(&self, label: &str) -> Option<&BinReport> {
        self.bins.iter().find(|b| b.label == label)
    }
}

/// Ground truth and final detections of one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameEval<'a> {
    pub gt: &'a [Box3D],
    pub detections: &'a [Detection],
}

/// Evaluate frames that carry both detections and ground truth.
pub fn evaluate_ranges(frames: &[FrameBundle], cfg: &EvalConfig) -> Result<EvalReport> {
    let inputs = frames
        .iter()
        .map(|f| {
            let detections = f.detections.as_deref().ok_or_else(|| Error::MissingInput {
                frame: f.frame_id.clone(),
                what: "detections",
            })?;
            Ok(FrameEval {
                gt: &f.gt_boxes,
                detections,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate(&inputs, cfg, ExecMode::default())
}

/// Ground truth is binned by the range of its center. A true positive counts
/// in the bin of its matched ground truth, a false positive in the bin of its
/// own center.
pub fn evaluate(frames: &[FrameEval<'_>], cfg: &EvalConfig, mode: ExecMode) -> Result<EvalReport> {
    cfg.validate()?;
    let matches = exec::map_slice(mode, frames, |f| {
        match_frame(f.detections, f.gt, cfg.iou_threshold)
    });
    let bins = cfg
        .all_bins()
        .into_iter()
        .map(|bin| {
            let mut outcomes = Vec::new();
            let (mut num_gt, mut tp, mut fp, mut ghosts) = (0, 0, 0, 0);
            for (f, m) in frames.iter().zip(&matches) {
                num_gt += f.gt.iter().filter(|g| bin.contains(g.bev_range())).count();
                for (di, d) in f.detections.iter().enumerate() {
                    let in_bin = match m.det_to_gt[di] {
                        Some(gi) => bin.contains(f.gt[gi].bev_range()),
                        None => bin.contains(bev_range(d.bbox.x, d.bbox.y)),
                    };
                    if !in_bin {
                        continue;
                    }
                    let is_tp = m.det_to_gt[di].is_some();
                    if is_tp {
                        tp += 1;
                    } else {
                        fp += 1;
                        if m.max_iou[di] == 0.0 {
                            ghosts += 1;
                        }
                    }
                    outcomes.push(Outcome {
                        confidence: d.confidence,
                        tp: is_tp,
                    });
                }
            }
            BinReport {
                label: bin.label(),
                bin,
                ap: average_precision(&outcomes, num_gt, cfg.interpolation),
                num_gt,
                tp,
                fp,
                fn_: num_gt - tp,
                ghosts,
                pr: pr_curve(&outcomes, num_gt),
            }
        })
        .collect();
    Ok(EvalReport {
        iou_threshold: cfg.iou_threshold,
        interpolation: cfg.interpolation,
        bins,
    })
}
