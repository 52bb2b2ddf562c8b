//! Deterministic Euclidean-clustering vehicle detector, plus ingestion of
//! detections computed elsewhere.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{normalize_angle, Box3D, Detection, PointCloud};
use crate::io::FrameBundle;
use crate::spatial::SpatialIndex;

/// Clusters with this many points get full confidence.
const FULL_CONFIDENCE_POINTS: f64 = 100.0;
/// Floor on fitted extents so flat or collinear clusters still form a box.
const MIN_EXTENT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterParams {
    /// Points closer than this are linked into one component.
    pub link_radius: f64,
    pub min_points: usize,
    /// Points at or below this height are ground and ignored.
    pub ground_z: f64,
    /// Upper bounds `[w, l, h]`; larger clusters are discarded.
    pub max_box: [f64; 3],
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            link_radius: 0.8,
            min_points: 5,
            ground_z: 0.2,
            max_box: [3.0, 7.0, 3.0],
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self.link_radius > 0.0 && self.max_box.iter().all(|&v| v > 0.0);
        if !positive || self.min_points < 3 || !self.ground_z.is_finite() {
            return Err(Error::invalid("cluster params", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Disjoint-set forest with path halving; the smaller index becomes the
/// root so component ids are stable.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        match ra.cmp(&rb) {
            Ordering::Less => self.parent[rb] = ra,
            Ordering::Greater => self.parent[ra] = rb,
            Ordering::Equal => {}
        }
    }

    /// Members of every component, each sorted, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if slot[r] == usize::MAX {
                slot[r] = out.len();
                out.push(Vec::new());
            }
            out[slot[r]].push(i);
        }
        out
    }
}

/// Connected components of `positions` under `distance <= radius`.
pub fn euclidean_components(positions: &[[f64; 3]], radius: f64, mode: ExecMode) -> Vec<Vec<usize>> {
    let index = SpatialIndex::from_positions(positions.to_vec());
    let neighbours = exec::map_range(mode, positions.len(), |i| {
        let mut w = index.within(i, radius);
        w.retain(|&j| j > i);
        w
    });
    let mut uf = UnionFind::new(positions.len());
    for (i, ns) in neighbours.iter().enumerate() {
        for &j in ns {
            uf.union(i, j);
        }
    }
    uf.components()
}

/// Fit a yaw-oriented box to a point set: yaw from the principal axis of the
/// BEV covariance, extents from the bounds in that rotated frame.
pub fn fit_box(points: &[[f64; 3]]) -> Box3D {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    let mut yaw = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    if yaw >= std::f64::consts::FRAC_PI_2 {
        yaw -= std::f64::consts::PI;
    }
    let (s, c) = yaw.sin_cos();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        let (dx, dy) = (p[0] - mx, p[1] - my);
        let local = [c * dx + s * dy, -s * dx + c * dy, p[2]];
        for d in 0..3 {
            lo[d] = lo[d].min(local[d]);
            hi[d] = hi[d].max(local[d]);
        }
    }
    let mid = |d: usize| (lo[d] + hi[d]) / 2.0;
    let ext = |d: usize| (hi[d] - lo[d]).max(MIN_EXTENT);
    let (u, v) = (mid(0), mid(1));
    Box3D {
        x: mx + c * u - s * v,
        y: my + s * u + c * v,
        z: mid(2),
        w: ext(1),
        l: ext(0),
        h: ext(2),
        theta: normalize_angle(yaw),
    }
}

/// Cluster the above-ground points into vehicle detections, sorted by
/// confidence (descending), then center x, then center y.
pub fn cluster_detect(cloud: &PointCloud, params: &ClusterParams) -> Result<Vec<Detection>> {
    cluster_detect_with(cloud, params, ExecMode::default())
}

pub fn cluster_detect_with(
    cloud: &PointCloud,
    params: &ClusterParams,
    mode: ExecMode,
) -> Result<Vec<Detection>> {
    params.validate()?;
    let positions: Vec<[f64; 3]> = cloud
        .points()
        .iter()
        .filter(|p| p.z as f64 > params.ground_z)
        .map(|p| p.position())
        .collect();
    let [max_w, max_l, max_h] = params.max_box;
    let mut dets: Vec<Detection> = euclidean_components(&positions, params.link_radius, mode)
        .into_iter()
        .filter(|members| members.len() >= params.min_points)
        .filter_map(|members| {
            let pts: Vec<[f64; 3]> = members.iter().map(|&i| positions[i]).collect();
            let b = fit_box(&pts);
            if b.w > max_w || b.l > max_l || b.h > max_h {
                return None;
            }
            let confidence = (pts.len() as f64 / FULL_CONFIDENCE_POINTS).min(1.0);
            Some(Detection::new(b, confidence).expect("fitted box is valid"))
        })
        .collect();
    dets.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.bbox.x.total_cmp(&b.bbox.x))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
    });
    Ok(dets)
}

/// Attach detections produced by an external model to their frame.
pub fn attach_external_detections(
    mut bundle: FrameBundle,
    frame_id: &str,
    dets: Vec<Detection>,
) -> Result<FrameBundle> {
    if frame_id != bundle.frame_id {
        return Err(Error::FrameMismatch {
            expected: bundle.frame_id,
            actual: frame_id.to_owned(),
        });
    }
    bundle.detections = Some(dets);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn empty_cloud_has_no_detections() {
        let dets = cluster_detect(&PointCloud::empty(), &ClusterParams::default()).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn ground_and_small_clusters_are_ignored() {
        let mut pts: Vec<Point> = (0..50)
            .map(|i| Point::new(i as f32 * 0.3, 0.0, 0.05, 0.0))
            .collect();
        pts.extend((0..4).map(|i| Point::new(5.0 + 0.1 * i as f32, 3.0, 1.0, 0.0)));
        let cloud = PointCloud::new(pts).unwrap();
        assert!(cluster_detect(&cloud, &ClusterParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn fit_box_recovers_rotated_rectangle() {
        let yaw: f64 = 0.4;
        let (s, c) = yaw.sin_cos();
        let mut pts = Vec::new();
        for i in 0..=20 {
            for j in 0..=8 {
                let u = -2.25 + 4.5 * i as f64 / 20.0;
                let v = -0.95 + 1.9 * j as f64 / 8.0;
                for z in [0.3, 1.5] {
                    pts.push([10.0 + c * u - s * v, 2.0 + s * u + c * v, z]);
                }
            }
        }
        let b = fit_box(&pts);
        assert!((b.theta - yaw).abs() < 1e-9);
        assert!((b.l - 4.5).abs() < 1e-9 && (b.w - 1.9).abs() < 1e-9);
        assert!((b.x - 10.0).abs() < 1e-9 && (b.y - 2.0).abs() < 1e-9);
        assert!((b.z - 0.9).abs() < 1e-12 && (b.h - 1.2).abs() < 1e-12);
    }

    #[test]
    fn confidence_saturates_and_orders() {
        let blob = |x: f32, n: usize| -> Vec<Point> {
            (0..n)
                .map(|i| Point::new(x + 0.02 * (i % 10) as f32, 0.02 * (i / 10) as f32, 1.0, 0.0))
                .collect()
        };
        let mut pts = blob(20.0, 30);
        pts.extend(blob(5.0, 150));
        pts.extend(blob(10.0, 30));
        let dets = cluster_detect(&PointCloud::new(pts).unwrap(), &ClusterParams::default()).unwrap();
        let summary: Vec<(f64, f64)> = dets.iter().map(|d| (d.confidence, d.bbox.x.round())).collect();
        assert_eq!(summary, vec![(1.0, 5.0), (0.3, 10.0), (0.3, 20.0)]);
    }

    #[test]
    fn oversized_clusters_are_dropped() {
        let pts: Vec<Point> = (0..100)
            .map(|i| Point::new(i as f32 * 0.2, 0.0, 1.0, 0.0))
            .collect();
        let dets = cluster_detect(&PointCloud::new(pts).unwrap(), &ClusterParams::default()).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn attach_checks_frame_id() {
        let bundle = FrameBundle::new("f1", PointCloud::empty());
        let b = Box3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let dets = vec![Detection::new(b, 0.5).unwrap()];
        let attached = attach_external_detections(bundle.clone(), "f1", dets.clone()).unwrap();
        assert_eq!(attached.detections, Some(dets.clone()));
        assert!(matches!(
            attach_external_detections(bundle.clone(), "f2", dets),
            Err(Error::FrameMismatch { .. })
        ));
        let empty = attach_external_detections(bundle, "f1", vec![]).unwrap();
        assert_eq!(empty.detections, Some(vec![]));
    }
}
