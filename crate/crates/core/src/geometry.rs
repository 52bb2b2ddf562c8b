//! Domain types and box algebra shared by every pipeline stage.
//!
//! Axis convention: x forward, y left, z up. A box's `l` runs along its
//! heading `theta`, `w` is the lateral extent and `h` the vertical one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One LiDAR return. Stored as `f32` to match the on-disk record layout.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    #[inline]
    pub fn position(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

/// A LiDAR scan of `N` points with the four channels x, y, z, intensity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    /// Number of channels per point.
    pub const CHANNELS: usize = 4;

    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "point cloud",
                index,
            });
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    #[inline]
    pub fn position(&self, i: usize) -> [f64; 3] {
        self.points[i].position()
    }

    /// Points whose mask entry is true, in input order.
    pub fn select(&self, mask: &[bool]) -> Result<PointCloud> {
        check_len("mask", self.len(), mask.len())?;
        Ok(PointCloud {
            points: select(&self.points, mask),
        })
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

pub(crate) fn select<T: Clone>(items: &[T], mask: &[bool]) -> Vec<T> {
    items
        .iter()
        .zip(mask)
        .filter(|(_, &keep)| keep)
        .map(|(item, _)| item.clone())
        .collect()
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Wrap an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta - 2.0 * PI * ((theta + PI) / (2.0 * PI)).floor();
    if t >= PI {
        t -= 2.0 * PI;
    }
    if t < -PI {
        t = -PI;
    }
    t
}

/// Yaw-oriented 3D box `[x, y, z, w, l, h, theta]`; `(x, y, z)` is the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub l: f64,
    pub h: f64,
    pub theta: f64,
}

impl Box3D {
    /// Validates positive extents and wraps `theta` into `[-π, π)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(x: f64, y: f64, z: f64, w: f64, l: f64, h: f64, theta: f64) -> Result<Self> {
        let b = Box3D {
            x,
            y,
            z,
            w,
            l,
            h,
            theta: normalize_angle(theta),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.x, self.y, self.z, self.w, self.l, self.h, self.theta];
        if let Some(index) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "box", index });
        }
        if self.w <= 0.0 || self.l <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(
                "box",
                format!(
                    "extents must be positive, got w={} l={} h={}",
                    self.w, self.l, self.h
                ),
            ));
        }
        if !(-PI..PI).contains(&self.theta) {
            return Err(Error::invalid(
                "box",
                format!("theta {} outside [-pi, pi)", self.theta),
            ));
        }
        Ok(())
    }

    pub fn center(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn volume(&self) -> f64 {
        self.w * self.l * self.h
    }

    /// Bird's-eye distance of the center from the sensor origin.
    pub fn bev_range(&self) -> f64 {
        bev_range(self.x, self.y)
    }

    /// Footprint corners, counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.theta.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
            .map(|(u, v)| [self.x + c * u - s * v, self.y + s * u + c * v])
    }

    fn z_interval(&self) -> (f64, f64) {
        (self.z - self.h / 2.0, self.z + self.h / 2.0)
    }
}

/// Grow every extent of `b` by `gamma` (so `gamma / 2` per side); center and
/// yaw are unchanged.
pub fn pad_box(b: &Box3D, gamma: f64) -> Result<Box3D> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(
            "gamma",
            format!("{gamma} must be finite and >= 0"),
        ));
    }
    Ok(Box3D {
        w: b.w + gamma,
        l: b.l + gamma,
        h: b.h + gamma,
        ..*b
    })
}

/// Inclusive containment test in the box frame.
pub fn box_contains_point(b: &Box3D, p: [f64; 3]) -> bool {
    let (dx, dy, dz) = (p[0] - b.x, p[1] - b.y, p[2] - b.z);
    let (s, c) = b.theta.sin_cos();
    let along = c * dx + s * dy;
    let across = -s * dx + c * dy;
    along.abs() <= b.l / 2.0 && across.abs() <= b.w / 2.0 && dz.abs() <= b.h / 2.0
}

/// Euclidean distance from the sensor origin in the x-y plane.
#[inline]
pub fn bev_range(x: f64, y: f64) -> f64 {
    x.hypot(y)
}

/// 3D IoU of two yaw-rotated boxes: BEV polygon intersection times vertical
/// overlap, over the union volume.
pub fn box_iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    if a == b {
        return 1.0;
    }
    let (a_lo, a_hi) = a.z_interval();
    let (b_lo, b_hi) = b.z_interval();
    let dz = a_hi.min(b_hi) - a_lo.max(b_lo);
    if dz <= 0.0 {
        return 0.0;
    }
    // Cheap circumscribed-circle rejection before clipping.
    let (ra, rb) = (a.l.hypot(a.w) / 2.0, b.l.hypot(b.w) / 2.0);
    if (a.x - b.x).hypot(a.y - b.y) > ra + rb {
        return 0.0;
    }
    let area = convex_intersection_area(&a.bev_corners(), &b.bev_corners());
    let inter = area * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Area of the intersection of two convex counter-clockwise polygons
/// (Sutherland-Hodgman clipping).
pub fn convex_intersection_area(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> f64 {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let (e0, e1) = (clip[i], clip[(i + 1) % n]);
        let side = |p: [f64; 2]| (e1[0] - e0[0]) * (p[1] - e0[1]) - (e1[1] - e0[1]) * (p[0] - e0[0]);
        let input = std::mem::take(&mut output);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    polygon_area(&output)
}

fn intersect(p: [f64; 2], q: [f64; 2], sp: f64, sq: f64) -> [f64; 2] {
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    (twice / 2.0).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    #[default]
    Vehicle,
}

/// A detected object: box plus confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub confidence: f64,
    pub class: ObjectClass,
}

impl Detection {
    pub fn new(bbox: Box3D, confidence: f64) -> Result<Self> {
        bbox.validate()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::invalid(
                "confidence",
                format!("{confidence} outside [0, 1]"),
            ));
        }
        Ok(Self {
            bbox,
            confidence,
            class: ObjectClass::Vehicle,
        })
    }
}

/// A radar return: position plus radial velocity (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarTarget {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub v: f64,
}

impl RadarTarget {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// The `M` radar targets of one frame; may be empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RadarTargetList {
    targets: Vec<RadarTarget>,
}

impl RadarTargetList {
    pub fn new(targets: Vec<RadarTarget>) -> Result<Self> {
        if let Some(index) = targets
            .iter()
            .position(|t| ![t.x, t.y, t.z, t.v].iter().all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite {
                what: "radar targets",
                index,
            });
        }
        Ok(Self { targets })
    }

    pub fn targets(&self) -> &[RadarTarget] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Per-point anomaly scores; larger means more likely noise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreArray {
    scores: Vec<f32>,
}

impl ScoreArray {
    pub fn new(scores: Vec<f32>) -> Result<Self> {
        if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                what: "scores",
                index,
            });
        }
        Ok(Self { scores })
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn select(&self, mask: &[bool]) -> Result<ScoreArray> {
        check_len("mask", self.len(), mask.len())?;
        Ok(ScoreArray {
            scores: select(&self.scores, mask),
        })
    }
}

/// Semantic class of a single point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum PointClass {
    #[default]
    Background = 0,
    Vehicle = 1,
    Spray = 2,
}

impl PointClass {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(PointClass::Background),
            1 => Some(PointClass::Vehicle),
            2 => Some(PointClass::Spray),
            _ => None,
        }
    }

    /// Anything that is not spray is a valid point for the filter.
    pub fn is_valid(self) -> bool {
        self != PointClass::Spray
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointLabelArray {
    labels: Vec<PointClass>,
}

impl PointLabelArray {
    pub fn new(labels: Vec<PointClass>) -> Self {
        Self { labels }
    }

    pub fn as_slice(&self) -> &[PointClass] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, mask: &[bool]) -> Result<PointLabelArray> {
        check_len("mask", self.len(), mask.len())?;
        Ok(PointLabelArray {
            labels: select(&self.labels, mask),
        })
    }
}
