//! Static kd-tree over a point cloud for k-nearest-neighbour and fixed-radius
//! queries.
//!
//! Neighbours are ordered by `(squared distance, point index)`, so ties are
//! broken by index and results match a brute-force scan exactly.

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::PointCloud;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        dim: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Read-only acceleration structure; safe to share across threads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    positions: Vec<[f64; 3]>,
    perm: Vec<u32>,
    nodes: Vec<Node>,
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_positions(cloud.points().iter().map(|p| p.position()).collect())
    }

    pub fn from_positions(positions: Vec<[f64; 3]>) -> Self {
        assert!(positions.len() < u32::MAX as usize, "cloud too large for index");
        let mut index = SpatialIndex {
            perm: (0..positions.len() as u32).collect(),
            positions,
            nodes: Vec::new(),
        };
        if !index.positions.is_empty() {
            index.build_node(0, index.positions.len());
        }
        index
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if hi - lo <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: lo as u32,
                end: hi as u32,
            });
            return id;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.perm[lo..hi] {
            let p = &self.positions[i as usize];
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let dim = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap_or(0);
        let mid = lo + (hi - lo) / 2;
        let positions = &self.positions;
        self.perm[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            positions[a as usize][dim].total_cmp(&positions[b as usize][dim])
        });
        let value = self.positions[self.perm[mid] as usize][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(lo, mid);
        let right = self.build_node(mid, hi);
        self.nodes[id as usize] = Node::Split {
            dim: dim as u8,
            value,
            left,
            right,
        };
        id
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        self.positions[i]
    }

    /// The `k` nearest neighbours of point `i` (itself excluded) as
    /// `(distance, index)`, nearest first. Returns fewer when the cloud is
    /// smaller than `k + 1`.
    pub fn knn(&self, i: usize, k: usize) -> Vec<(f64, usize)> {
        self.knn_point(&self.positions[i], k, Some(i))
    }

    /// The `k` nearest points to an arbitrary query position.
    pub fn knn_point(&self, q: &[f64; 3], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.knn_visit(0, q, k, exclude, &mut best);
        }
        best.into_iter().map(|(d2, j)| (d2.sqrt(), j)).collect()
    }

    fn knn_visit(
        &self,
        node: u32,
        q: &[f64; 3],
        k: usize,
        exclude: Option<usize>,
        best: &mut Vec<(f64, usize)>,
    ) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &j in &self.perm[start as usize..end as usize] {
                    let j = j as usize;
                    if Some(j) == exclude {
                        continue;
                    }
                    let cand = (dist2(q, &self.positions[j]), j);
                    if best.len() == k {
                        let worst = best[k - 1];
                        if (cand.0, cand.1) >= (worst.0, worst.1) {
                            continue;
                        }
                        best.pop();
                    }
                    let at = best.partition_point(|&(d, idx)| (d, idx) < (cand.0, cand.1));
                    best.insert(at, cand);
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.knn_visit(near, q, k, exclude, best);
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.knn_visit(far, q, k, exclude, best);
                }
            }
        }
    }

    /// Indices of all other points within `radius` (inclusive) of point `i`,
    /// ascending.
    pub fn within(&self, i: usize, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_visit(i, radius, |j| out.push(j));
        out.sort_unstable();
        out
    }

    /// Number of other points within `radius` (inclusive) of point `i`.
    pub fn radius_count(&self, i: usize, radius: f64) -> usize {
        let mut n = 0;
        self.radius_visit(i, radius, |_| n += 1);
        n
    }

    fn radius_visit(&self, i: usize, radius: f64, mut f: impl FnMut(usize)) {
        if self.nodes.is_empty() || radius.is_nan() || radius < 0.0 {
            return;
        }
        let q = self.positions[i];
        let r2 = radius * radius;
        let mut stack = vec![0u32];
        while let Some(node) = stack.pop() {
            match self.nodes[node as usize] {
                Node::Leaf { start, end } => {
                    for &j in &self.perm[start as usize..end as usize] {
                        let j = j as usize;
                        if j != i && dist2(&q, &self.positions[j]) <= r2 {
                            f(j);
                        }
                    }
                }
                Node::Split {
                    dim,
                    value,
                    left,
                    right,
                } => {
                    let diff = q[dim as usize] - value;
                    if diff <= 0.0 || diff * diff <= r2 {
                        stack.push(left);
                    }
                    if diff >= 0.0 || diff * diff <= r2 {
                        stack.push(right);
                    }
                }
            }
        }
    }
}

/// Mean distance from every point to its `k` nearest neighbours, itself
/// excluded.
pub fn knn_mean_distance(index: &SpatialIndex, k: usize) -> Result<Vec<f64>> {
    knn_mean_distance_with(index, k, ExecMode::default())
}

pub fn knn_mean_distance_with(index: &SpatialIndex, k: usize, mode: ExecMode) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if k >= index.len() {
        return Err(Error::invalid(
            "k",
            format!("k = {k} needs more than {k} points, cloud has {}", index.len()),
        ));
    }
    Ok(exec::map_range(mode, index.len(), |i| {
        let nn = index.knn(i, k);
        nn.iter().map(|&(d, _)| d).sum::<f64>() / k as f64
    }))
}

/// Number of other points within `radius` of point `point_idx`.
pub fn radius_count(index: &SpatialIndex, point_idx: usize, radius: f64) -> usize {
    index.radius_count(point_idx, radius)
}
