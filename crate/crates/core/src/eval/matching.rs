use crate::geometry::{box_iou_3d, Box3D, Detection};

/// Greedy one-to-one assignment of detections to ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// Matched ground-truth index per detection; `None` is a false positive.
    pub det_to_gt: Vec<Option<usize>>,
    /// Matched detection index per ground-truth box; `None` is a miss.
    pub gt_to_det: Vec<Option<usize>>,
    /// Largest IoU of each detection with any ground-truth box.
    pub max_iou: Vec<f64>,
}

impl FrameMatch {
    pub fn is_tp(&self, det: usize) -> bool {
        self.det_to_gt[det].is_some()
    }

    pub fn true_positives(&self) -> usize {
        self.det_to_gt.iter().flatten().count()
    }
}

/// Detection indices by descending confidence, input order on ties.
pub(crate) fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Visit detections in descending confidence; each takes the still-unmatched
/// ground-truth box with the highest IoU (lowest index on ties) and is a true
/// positive if that IoU reaches `iou_threshold`.
pub fn match_frame(dets: &[Detection], gts: &[Box3D], iou_threshold: f64) -> FrameMatch {
    let iou: Vec<Vec<f64>> = dets
        .iter()
        .map(|d| gts.iter().map(|g| box_iou_3d(&d.bbox, g)).collect())
        .collect();
    let mut det_to_gt = vec![None; dets.len()];
    let mut gt_to_det = vec![None; gts.len()];
    for di in confidence_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, &v) in iou[di].iter().enumerate() {
            if gt_to_det[gi].is_some() {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            if v >= iou_threshold {
                det_to_gt[di] = Some(gi);
                gt_to_det[gi] = Some(di);
            }
        }
    }
    let max_iou = iou
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    FrameMatch {
        det_to_gt,
        gt_to_det,
        max_iou,
    }
}
