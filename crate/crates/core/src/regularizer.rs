//! KNN graph over the source cloud and the graph Laplacian rigidity loss.
//!
//! Neighbor search is exact: brute force for small clouds, spatial grid
//! hashing with expanding shells above that. Ties break by ascending index
//! in both paths, so results are deterministic and identical across paths.

use std::collections::HashMap;

use crate::cloud::{FlowField, PointCloud};
use crate::divergence::DivergenceValue;
use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::par::map_rows;

const BRUTE_FORCE_LIMIT: usize = 2000;

/// Directed k-nearest-neighbor lists over a cloud. Each list holds exactly
/// `min(k, N-1)` indices sorted by ascending distance, ties by index; no
/// self-loops.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    neighbor_lists: Vec<Vec<usize>>,
    k: usize,
    clamped: bool,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.neighbor_lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_lists.is_empty()
    }

    /// The effective neighbor count (after any clamping).
    pub fn k(&self) -> usize {
        self.k
    }

    /// True when the requested k was >= N and got clamped to N-1.
    pub fn clamped(&self) -> bool {
        self.clamped
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbor_lists[i]
    }

    pub fn neighbor_lists(&self) -> &[Vec<usize>] {
        &self.neighbor_lists
    }
}

/// Exact k-nearest-neighbor graph by Euclidean distance.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<KnnGraph> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::Dimension(format!(
            "KNN graph needs at least 2 points, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    let (k_eff, clamped) = if k >= n { (n - 1, true) } else { (k, false) };
    let points = cloud.points();
    let neighbor_lists = if n <= BRUTE_FORCE_LIMIT || cloud.diameter() == 0.0 {
        knn_brute(points, k_eff)
    } else {
        knn_grid(points, k_eff, cloud)
    };
    Ok(KnnGraph { neighbor_lists, k: k_eff, clamped })
}

fn knn_brute(points: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    map_rows(points.len(), false, |i| {
        let mut cand: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, p)| (math::dist_sq(points[i], *p), j))
            .collect();
        pick_k(&mut cand, k)
    })
}

fn knn_grid(points: &[Vec3], k: usize, cloud: &PointCloud) -> Vec<Vec<usize>> {
    let (lo, _) = cloud.bounding_box();
    // Cell size targets a few points per cell for uniform-ish data; any
    // positive value keeps the search exact.
    let h = cloud.diameter() / (points.len() as f64).cbrt();
    let cell_of = |p: Vec3| -> (i64, i64, i64) {
        (
            ((p[0] - lo[0]) / h).floor() as i64,
            ((p[1] - lo[1]) / h).floor() as i64,
            ((p[2] - lo[2]) / h).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut max_coord = 0i64;
    for (i, p) in points.iter().enumerate() {
        let c = cell_of(*p);
        max_coord = max_coord.max(c.0).max(c.1).max(c.2);
        cells.entry(c).or_default().push(i);
    }
    let r_max = max_coord + 1;

    map_rows(points.len(), false, |i| {
        let q = points[i];
        let (cx, cy, cz) = cell_of(q);
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let mut r = 0i64;
        loop {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(members) = cells.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &j in members {
                                if j != i {
                                    cand.push((math::dist_sq(q, points[j]), j));
                                }
                            }
                        }
                    }
                }
            }
            // Any point not yet seen sits at least r*h away, so once the kth
            // candidate is strictly closer the lists are final (including
            // index tie-breaks).
            if cand.len() >= k {
                let kth = {
                    let (_, nth, _) = cand.select_nth_unstable_by(k - 1, |a, b| {
                        a.partial_cmp(b).unwrap()
                    });
                    nth.0
                };
                let reach = r as f64 * h;
                if kth < reach * reach {
                    break;
                }
            }
            if r > r_max {
                break;
            }
            r += 1;
        }
        pick_k(&mut cand, k)
    })
}

fn pick_k(cand: &mut Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        cand.truncate(k);
    }
    cand.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    cand.iter().map(|&(_, j)| j).collect()
}

/// Mean L1 flow difference across graph edges:
/// `(1/N) sum_i (1/|I_i|) sum_{j in I_i} |d_i - d_j|_1`, with the sign
/// subgradient (sign(0) = 0) when requested.
pub fn laplacian_loss(
    flow: &FlowField,
    graph: &KnnGraph,
    want_gradient: bool,
) -> Result<DivergenceValue> {
    if flow.len() != graph.len() {
        return Err(Error::Dimension(format!(
            "flow length {} does not match graph size {}",
            flow.len(),
            graph.len()
        )));
    }
    let d = flow.vectors();
    let n = d.len() as f64;
    let mut value = 0.0;
    let mut gradient = want_gradient.then(|| vec![[0.0f64; 3]; d.len()]);
    for (i, neighbors) in graph.neighbor_lists().iter().enumerate() {
        if neighbors.is_empty() {
            continue;
        }
        let w = 1.0 / (n * neighbors.len() as f64);
        let mut row = 0.0;
        for &j in neighbors {
            let diff = math::sub(d[i], d[j]);
            row += diff[0].abs() + diff[1].abs() + diff[2].abs();
            if let Some(grad) = gradient.as_mut() {
                for c in 0..3 {
                    let s = sgn(diff[c]) * w;
                    grad[i][c] += s;
                    grad[j][c] -= s;
                }
            }
        }
        value += row / neighbors.len() as f64;
    }
    value /= n;
    Ok(DivergenceValue { value, gradient })
}

#[inline]
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
