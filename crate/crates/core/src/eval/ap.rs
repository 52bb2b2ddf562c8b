use serde::{Deserialize, Serialize};

/// Precision-recall interpolation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Interpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    #[serde(rename = "all-point")]
    AllPoint,
    /// Mean envelope precision at recall 1/40, 2/40, ..., 1.
    #[serde(rename = "40-point")]
    FortyPoint,
}

impl Interpolation {
    pub fn name(self) -> &'static str {
        match self {
            Interpolation::AllPoint => "all-point",
            Interpolation::FortyPoint => "40-point",
        }
    }
}

/// One scored detection after matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub confidence: f64,
    pub tp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    /// Detections with confidence `>=` this value are counted.
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision and recall after each distinct confidence level, highest first.
/// Detections sharing a confidence enter the curve together, so the curve
/// does not depend on input order.
pub fn pr_curve(outcomes: &[Outcome], num_gt: usize) -> Vec<PrPoint> {
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let level = sorted[i].confidence;
        while i < sorted.len() && sorted[i].confidence == level {
            if sorted[i].tp {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            confidence: level,
            recall: if num_gt > 0 {
                tp as f64 / num_gt as f64
            } else {
                0.0
            },
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    points
}

/// Average precision over pooled outcomes; `None` when there is no ground
/// truth to recall.
pub fn average_precision(outcomes: &[Outcome], num_gt: usize, interp: Interpolation) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let curve = pr_curve(outcomes, num_gt);
    // Running maximum from the right gives the interpolated precision.
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for j in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[j] = envelope[j].max(envelope[j + 1]);
    }
    let ap = match interp {
        Interpolation::AllPoint => {
            let mut prev = 0.0;
            let mut sum = 0.0;
            for (p, env) in curve.iter().zip(&envelope) {
                sum += (p.recall - prev) * env;
                prev = p.recall;
            }
            sum
        }
        Interpolation::FortyPoint => {
            let mut sum = 0.0;
            let mut j = 0;
            for t in 1..=40 {
                let r = t as f64 / 40.0;
                while j < curve.len() && curve[j].recall < r {
                    j += 1;
                }
                if j < curve.len() {
                    sum += envelope[j];
                }
            }
            sum / 40.0
        }
    };
    Some(ap.clamp(0.0, 1.0))
}
