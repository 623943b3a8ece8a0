//! Soft-correspondence flow initialization: voxelize both clouds, describe
//! voxels with a handcrafted geometric descriptor (standing in for a learned
//! backbone), match voxels through a cosine cost matrix with top-K transport
//! weights, and interpolate the voxel flow back to points.

use std::collections::HashMap;

use crate::cloud::{FlowField, PointCloud};
use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::par::map_rows;

/// Descriptor width produced by [`compute_features`]: 3 centered/scaled
/// coordinates, 3 local covariance eigenvalues, 1 local density.
pub const DESCRIPTOR_DIM: usize = 7;

/// A voxelization of a cloud: centroids of occupied cells, the point-to-voxel
/// assignment, and one feature row per voxel.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    resolution: f64,
    voxel_centers: Vec<Vec3>,
    point_to_voxel: Vec<usize>,
    voxel_features: Vec<Vec<f64>>,
    voxel_counts: Vec<usize>,
    total_points: usize,
}

impl VoxelGrid {
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.voxel_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxel_centers.is_empty()
    }

    pub fn voxel_centers(&self) -> &[Vec3] {
        &self.voxel_centers
    }

    pub fn point_to_voxel(&self) -> &[usize] {
        &self.point_to_voxel
    }

    pub fn voxel_features(&self) -> &[Vec<f64>] {
        &self.voxel_features
    }

    pub fn voxel_counts(&self) -> &[usize] {
        &self.voxel_counts
    }
}

/// Bucket points by `floor(coordinate / resolution)`. Voxel centers are the
/// centroids of their member points; features are the member means when the
/// cloud carries features, otherwise empty until [`compute_features`].
/// Voxels are ordered by first point occurrence.
pub fn voxelize(cloud: &PointCloud, resolution: f64) -> Result<VoxelGrid> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "voxel resolution must be positive, got {resolution}"
        )));
    }
    let mut cell_index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut point_to_voxel = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points().iter().enumerate() {
        let key = (
            (p[0] / resolution).floor() as i64,
            (p[1] / resolution).floor() as i64,
            (p[2] / resolution).floor() as i64,
        );
        let v = *cell_index.entry(key).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[v].push(i);
        point_to_voxel.push(v);
    }

    let points = cloud.points();
    let voxel_centers: Vec<Vec3> = members
        .iter()
        .map(|m| {
            let mut c = [0.0; 3];
            for &i in m {
                c = math::add(c, points[i]);
            }
            math::scale(c, 1.0 / m.len() as f64)
        })
        .collect();
    let voxel_features: Vec<Vec<f64>> = match cloud.features() {
        Some(feats) => members
            .iter()
            .map(|m| {
                let dim = feats[0].len();
                let mut f = vec![0.0; dim];
                for &i in m {
                    for (acc, v) in f.iter_mut().zip(&feats[i]) {
                        *acc += v;
                    }
                }
                let inv = 1.0 / m.len() as f64;
                f.iter_mut().for_each(|v| *v *= inv);
                f
            })
            .collect(),
        None => vec![Vec::new(); members.len()],
    };
    let voxel_counts = members.iter().map(Vec::len).collect();
    Ok(VoxelGrid {
        resolution,
        voxel_centers,
        point_to_voxel,
        voxel_features,
        voxel_counts,
        total_points: cloud.len(),
    })
}

/// Replace voxel features with a handcrafted geometric descriptor of width
/// [`DESCRIPTOR_DIM`]: voxel coordinates centered on the grid mean and scaled
/// by the bounding-box diagonal, the covariance eigenvalues (descending) of
/// the voxel's `neighborhood_k` nearest voxel centers (self included), and
/// the voxel's share of the cloud's points. `neighborhood_k` clamps to the
/// voxel count.
pub fn compute_features(grid: &VoxelGrid, neighborhood_k: usize) -> VoxelGrid {
    let centers = &grid.voxel_centers;
    let v = centers.len();
    let mean = {
        let mut c = [0.0; 3];
        for p in centers {
            c = math::add(c, *p);
        }
        math::scale(c, 1.0 / v as f64)
    };
    let diag = {
        let mut lo = centers[0];
        let mut hi = centers[0];
        for p in centers {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        math::norm(math::sub(hi, lo))
    };
    let inv_diag = if diag > 0.0 { 1.0 / diag } else { 0.0 };
    let k = neighborhood_k.min(v.saturating_sub(1));

    let features = map_rows(v, false, |i| {
        let mut f = Vec::with_capacity(DESCRIPTOR_DIM);
        let centered = math::scale(math::sub(centers[i], mean), inv_diag);
        f.extend_from_slice(&centered);

        // self plus k nearest other voxels, ties by index
        let mut cand: Vec<(f64, usize)> = centers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, c)| (math::dist_sq(centers[i], *c), j))
            .collect();
        cand.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        cand.truncate(k);
        let hood: Vec<Vec3> =
            std::iter::once(centers[i]).chain(cand.iter().map(|&(_, j)| centers[j])).collect();
        let m = hood.len() as f64;
        let mut hm = [0.0; 3];
        for p in &hood {
            hm = math::add(hm, *p);
        }
        hm = math::scale(hm, 1.0 / m);
        let mut cov = [[0.0f64; 3]; 3];
        for p in &hood {
            let d = math::sub(*p, hm);
            for r in 0..3 {
                for c in 0..3 {
                    cov[r][c] += d[r] * d[c];
                }
            }
        }
        for row in cov.iter_mut() {
            for x in row.iter_mut() {
                *x /= m;
            }
        }
        f.extend_from_slice(&math::sym3_eigenvalues(&cov));
        f.push(grid.voxel_counts[i] as f64 / grid.total_points as f64);
        f
    });

    VoxelGrid { voxel_features: features, ..grid.clone() }
}

/// Per-source-voxel flow from soft correspondences: cosine costs between
/// voxel features, top-K lowest-cost targets per source voxel, transport
/// weights `exp(-cost / epsilon)`, flow to the weighted target centroid.
pub fn soft_correspondence_flow(
    source_grid: &VoxelGrid,
    target_grid: &VoxelGrid,
    top_k: usize,
    epsilon: f64,
) -> Result<Vec<Vec3>> {
    if source_grid.is_empty() || target_grid.is_empty() {
        return Err(Error::Dimension("soft correspondence needs nonempty grids".into()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "correspondence epsilon must be positive, got {epsilon}"
        )));
    }
    if top_k == 0 {
        return Err(Error::InvalidParameter("top_k must be positive".into()));
    }
    let dim_s = source_grid.voxel_features[0].len();
    let dim_t = target_grid.voxel_features[0].len();
    if dim_s != dim_t {
        return Err(Error::Dimension(format!(
            "feature dimension mismatch: source {dim_s}, target {dim_t}"
        )));
    }

    let k = top_k.min(target_grid.len());
    let target_norms: Vec<f64> = target_grid
        .voxel_features
        .iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    Ok(map_rows(source_grid.len(), false, |i| {
        let fi = &source_grid.voxel_features[i];
        let ni: f64 = fi.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut costs: Vec<(f64, usize)> = target_grid
            .voxel_features
            .iter()
            .enumerate()
            .map(|(j, fj)| {
                let cost = if ni > 0.0 && target_norms[j] > 0.0 {
                    let dot: f64 = fi.iter().zip(fj).map(|(a, b)| a * b).sum();
                    1.0 - dot / (ni * target_norms[j])
                } else {
                    1.0
                };
                (cost, j)
            })
            .collect();
        costs.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        costs.truncate(k);
        // shift by the minimum cost so weights never underflow to all-zero;
        // the normalized blend is unchanged
        let min_cost = costs[0].0;
        let mut wsum = 0.0;
        let mut blend = [0.0f64; 3];
        for &(cost, j) in &costs {
            let w = (-(cost - min_cost) / epsilon).exp();
            wsum += w;
            blend = math::add(blend, math::scale(target_grid.voxel_centers[j], w));
        }
        math::sub(math::scale(blend, 1.0 / wsum), source_grid.voxel_centers[i])
    }))
}

/// Inverse-distance interpolation of per-voxel flows onto cloud points using
/// the `knn` nearest voxel centers. A point within 1e-12 of a voxel center
/// takes that voxel's flow exactly.
pub fn interpolate_to_points(
    voxel_flows: &[Vec3],
    grid: &VoxelGrid,
    cloud: &PointCloud,
    knn: usize,
) -> Result<FlowField> {
    if grid.is_empty() {
        return Err(Error::Dimension("interpolation needs a nonempty grid".into()));
    }
    if voxel_flows.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "voxel flow count {} does not match grid size {}",
            voxel_flows.len(),
            grid.len()
        )));
    }
    if knn == 0 {
        return Err(Error::InvalidParameter("interpolation knn must be positive".into()));
    }
    let k = knn.min(grid.len());
    let centers = grid.voxel_centers();
    let vectors = map_rows(cloud.len(), false, |i| {
        let p = cloud.points()[i];
        let mut cand: Vec<(f64, usize)> = centers
            .iter()
            .enumerate()
            .map(|(j, c)| (math::dist_sq(p, *c), j))
            .collect();
        cand.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let (d2_near, j_near) = cand[0];
        if d2_near.sqrt() < 1e-12 {
            return voxel_flows[j_near];
        }
        let mut wsum = 0.0;
        let mut blend = [0.0f64; 3];
        for &(d2, j) in cand.iter().take(k) {
            let w = 1.0 / d2.sqrt();
            wsum += w;
            blend = math::add(blend, math::scale(voxel_flows[j], w));
        }
        math::scale(blend, 1.0 / wsum)
    });
    FlowField::new(vectors)
}
