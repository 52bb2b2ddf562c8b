//! Per-point noise removal: score thresholding, DSOR and DROR, plus the
//! filter-quality metrics and TPR-based threshold calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{bev_range, check_len, PointClass, PointCloud, PointLabelArray, ScoreArray};
use crate::spatial::{knn_mean_distance_with, SpatialIndex};

/// Score threshold `tau`: a point is valid iff its score is `<= tau`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() {
            return Err(Error::invalid("tau", format!("{tau} is not finite")));
        }
        Ok(Self(tau))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_valid(self, score: f32) -> bool {
        score as f64 <= self.0
    }
}

/// Keep mask plus the filtered cloud `P'` (kept points in input order).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub keep_mask: Vec<bool>,
    pub cloud: PointCloud,
}

impl FilterResult {
    fn from_mask(cloud: &PointCloud, keep_mask: Vec<bool>) -> Result<Self> {
        let filtered = cloud.select(&keep_mask)?;
        Ok(Self {
            keep_mask,
            cloud: filtered,
        })
    }

    /// `N'`, the number of kept points.
    pub fn kept(&self) -> usize {
        self.cloud.len()
    }
}

/// False for NaN as well as for non-positive values.
fn positive(v: f64) -> bool {
    v.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater)
}

/// Dynamic statistical outlier removal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DsorParams {
    /// Neighbour count.
    pub k: usize,
    /// Standard-deviation multiplier of the global threshold.
    pub s: f64,
    /// Range multiplier, 1/m.
    pub m: f64,
}

impl Default for DsorParams {
    fn default() -> Self {
        Self { k: 5, s: 1.0, m: 0.3 }
    }
}

impl DsorParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || !positive(self.s) || !positive(self.m) {
            return Err(Error::invalid("dsor params", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Dynamic radius outlier removal parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DrorParams {
    /// Search radius per metre of range (angular resolution times a multiplier).
    pub alpha: f64,
    pub min_radius: f64,
    pub min_neighbors: usize,
}

impl Default for DrorParams {
    fn default() -> Self {
        Self {
            alpha: 3.0 * 0.16f64.to_radians(),
            min_radius: 0.04,
            min_neighbors: 3,
        }
    }
}

impl DrorParams {
    pub fn validate(&self) -> Result<()> {
        if !positive(self.alpha) || !positive(self.min_radius) || self.min_neighbors < 1 {
            return Err(Error::invalid("dror params", format!("{self:?}")));
        }
        Ok(())
    }
}

pub fn threshold_mask(scores: &[f32], tau: Threshold, mode: ExecMode) -> Vec<bool> {
    exec::map_slice(mode, scores, |&s| tau.is_valid(s))
}

/// Keep every point whose score is `<= tau`.
pub fn threshold_filter(cloud: &PointCloud, scores: &ScoreArray, tau: Threshold) -> Result<FilterResult> {
    threshold_filter_with(cloud, scores, tau, ExecMode::default())
}

pub fn threshold_filter_with(
    cloud: &PointCloud,
    scores: &ScoreArray,
    tau: Threshold,
    mode: ExecMode,
) -> Result<FilterResult> {
    check_len("scores", cloud.len(), scores.len())?;
    FilterResult::from_mask(cloud, threshold_mask(scores.as_slice(), tau, mode))
}

/// Smallest score `tau` such that at least `ceil(tpr * n)` of the valid
/// scores are `<= tau`.
pub fn calibrate_threshold(valid_scores: &[f32], tpr: f64) -> Result<Threshold> {
    if valid_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if !(tpr > 0.0 && tpr <= 1.0) {
        return Err(Error::invalid("tpr", format!("{tpr} outside (0, 1]")));
    }
    if let Some(index) = valid_scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            what: "calibration scores",
            index,
        });
    }
    let n = valid_scores.len();
    let mut sorted = valid_scores.to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    // Absorb the representation error of decimal fractions such as 0.95 * 100.
    let need = (tpr * n as f64 - 1e-9 * n as f64).ceil().clamp(1.0, n as f64) as usize;
    Threshold::new(sorted[need - 1] as f64)
}

/// Pool the scores of all non-spray points for calibration.
pub fn valid_scores<'a>(pairs: impl IntoIterator<Item = (&'a ScoreArray, &'a PointLabelArray)>) -> Vec<f32> {
    pairs
        .into_iter()
        .flat_map(|(s, l)| {
            s.as_slice()
                .iter()
                .zip(l.as_slice())
                .filter(|(_, c)| c.is_valid())
                .map(|(&s, _)| s)
        })
        .collect()
}

/// DSOR: mean kNN distance `d_i` against a global threshold `mu + s * sigma`
/// scaled by `m * range_i` (range floored at 1 m). Points with
/// `d_i <= T_i` are kept.
pub fn dsor_filter(cloud: &PointCloud, params: &DsorParams) -> Result<FilterResult> {
    dsor_filter_with(cloud, params, ExecMode::default())
}

pub fn dsor_filter_with(cloud: &PointCloud, params: &DsorParams, mode: ExecMode) -> Result<FilterResult> {
    params.validate()?;
    let n = cloud.len();
    if n <= params.k {
        log::warn!(
            "dsor: cloud of {n} points is too small for k = {}, keeping all",
            params.k
        );
        return FilterResult::from_mask(cloud, vec![true; n]);
    }
    let index = SpatialIndex::build(cloud);
    let mean_dist = knn_mean_distance_with(&index, params.k, mode)?;
    let mu = mean_dist.iter().sum::<f64>() / n as f64;
    let var = mean_dist.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n as f64;
    let global = mu + params.s * var.sqrt();
    let mask = exec::map_range(mode, n, |i| {
        let p = &cloud.points()[i];
        let range = bev_range(p.x as f64, p.y as f64).max(1.0);
        mean_dist[i] <= global * params.m * range
    });
    FilterResult::from_mask(cloud, mask)
}

/// DROR: keep a point when at least `min_neighbors` others lie within
/// `max(min_radius, alpha * range_i)`.
pub fn dror_filter(cloud: &PointCloud, params: &DrorParams) -> Result<FilterResult> {
    dror_filter_with(cloud, params, ExecMode::default())
}

pub fn dror_filter_with(cloud: &PointCloud, params: &DrorParams, mode: ExecMode) -> Result<FilterResult> {
    params.validate()?;
    let index = SpatialIndex::build(cloud);
    let mask = exec::map_range(mode, cloud.len(), |i| {
        let p = &cloud.points()[i];
        let radius = params
            .min_radius
            .max(params.alpha * bev_range(p.x as f64, p.y as f64));
        index.radius_count(i, radius) >= params.min_neighbors
    });
    FilterResult::from_mask(cloud, mask)
}

/// Filter quality against per-point labels; spray is the noise class.
/// Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FilterMetrics {
    pub valid_total: usize,
    pub valid_kept: usize,
    pub spray_total: usize,
    pub spray_removed: usize,
    pub removed_total: usize,
    pub valid_tpr: Option<f64>,
    pub noise_recall: Option<f64>,
    pub noise_precision: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn filter_metrics(mask: &[bool], labels: &PointLabelArray) -> Result<FilterMetrics> {
    check_len("labels", mask.len(), labels.len())?;
    let mut m = FilterMetrics::default();
    for (&keep, &class) in mask.iter().zip(labels.as_slice()) {
        let spray = class == PointClass::Spray;
        if spray {
            m.spray_total += 1;
        } else {
            m.valid_total += 1;
        }
        match (keep, spray) {
            (true, false) => m.valid_kept += 1,
            (false, true) => {
                m.spray_removed += 1;
                m.removed_total += 1;
            }
            (false, false) => m.removed_total += 1,
            (true, true) => {}
        }
    }
    m.valid_tpr = ratio(m.valid_kept, m.valid_total);
    m.noise_recall = ratio(m.spray_removed, m.spray_total);
    m.noise_precision = ratio(m.spray_removed, m.removed_total);
    Ok(m)
}

/// The point-filter stage as a selectable method; `None` is the
/// no-preprocessing baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterMethod {
    None,
    Threshold(Threshold),
    Dsor(DsorParams),
    Dror(DrorParams),
}

impl FilterMethod {
    pub fn name(&self) -> &'static str {
        match self {
            FilterMethod::None => "none",
            FilterMethod::Threshold(_) => "threshold",
            FilterMethod::Dsor(_) => "dsor",
            FilterMethod::Dror(_) => "dror",
        }
    }

    /// Keep mask for one frame. `scores` is required for thresholding.
    pub fn mask(&self, cloud: &PointCloud, scores: Option<&ScoreArray>, mode: ExecMode) -> Result<Vec<bool>> {
        Ok(match self {
            FilterMethod::None => vec![true; cloud.len()],
            FilterMethod::Threshold(tau) => {
                let scores = scores.ok_or(Error::invalid("scores", "threshold filter needs scores"))?;
                threshold_filter_with(cloud, scores, *tau, mode)?.keep_mask
            }
            FilterMethod::Dsor(p) => dsor_filter_with(cloud, p, mode)?.keep_mask,
            FilterMethod::Dror(p) => dror_filter_with(cloud, p, mode)?.keep_mask,
        })
    }
}
