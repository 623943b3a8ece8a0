//! Core domain types: point clouds, isotropic mixture parameters, flow fields.

use crate::error::{Error, Result};
use crate::math::{self, Vec3};

/// An ordered set of 3D points with optional per-point feature vectors.
///
/// Points are kept in insertion order and never deduplicated: flow fields and
/// neighbor graphs index by position.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    features: Option<Vec<Vec<f64>>>,
}

impl PointCloud {
    /// Build a cloud from raw coordinates. Requires at least one point and
    /// finite coordinates everywhere.
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Dimension("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| !math::is_finite3(*p)) {
            return Err(Error::Dimension(format!("non-finite coordinate at point {i}")));
        }
        Ok(Self { points, features: None })
    }

    /// Build a cloud with per-point features. Feature rows must align 1:1 with
    /// points and share a single dimension.
    pub fn with_features(points: Vec<Vec3>, features: Vec<Vec<f64>>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        if features.len() != cloud.points.len() {
            return Err(Error::Dimension(format!(
                "feature count {} does not match point count {}",
                features.len(),
                cloud.points.len()
            )));
        }
        let dim = features[0].len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dimension(format!(
                    "feature row {i} has dimension {} but row 0 has {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension(format!("non-finite feature at point {i}")));
            }
        }
        cloud.features = Some(features);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn features(&self) -> Option<&[Vec<f64>]> {
        self.features.as_deref()
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Bounding-box diagonal length.
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        math::norm(math::sub(hi, lo))
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            c = math::add(c, *p);
        }
        math::scale(c, 1.0 / self.points.len() as f64)
    }

    /// Mean distance to the nearest other point, a cloud-scale proxy used by
    /// the automatic bandwidth heuristic. Brute force; returns 0 for a
    /// single-point cloud.
    pub fn mean_nearest_neighbor_distance(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..n {
            let mut best = f64::INFINITY;
            for j in 0..n {
                if i != j {
                    best = best.min(math::dist_sq(self.points[i], self.points[j]));
                }
            }
            total += best.sqrt();
        }
        total / n as f64
    }
}

/// Parameters of the isotropic Gaussian mixture attached to a cloud: one
/// shared spherical variance and a uniform mixture coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmSpec {
    variance: f64,
    weight: f64,
}

impl GmmSpec {
    /// A uniform isotropic mixture over `component_count` components, each
    /// weighted exactly `1 / component_count`.
    pub fn isotropic(variance: f64, component_count: usize) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mixture variance must be positive and finite, got {variance}"
            )));
        }
        if component_count == 0 {
            return Err(Error::InvalidParameter("component count must be positive".into()));
        }
        Ok(Self { variance, weight: 1.0 / component_count as f64 })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn log_weight(&self) -> f64 {
        self.weight.ln()
    }

    /// Check that this spec's uniform weight matches a cloud of `n` points.
    pub(crate) fn check_matches(&self, n: usize, what: &str) -> Result<()> {
        if self.weight != 1.0 / n as f64 {
            return Err(Error::InvalidParameter(format!(
                "{what}: mixture weight {} is not 1/{n}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Per-source-point 3D displacement vectors; the optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    vectors: Vec<Vec3>,
}

impl FlowField {
    pub fn new(vectors: Vec<Vec3>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Dimension("flow field must contain at least one vector".into()));
        }
        if let Some(i) = vectors.iter().position(|v| !math::is_finite3(*v)) {
            return Err(Error::Dimension(format!("non-finite flow vector at index {i}")));
        }
        Ok(Self { vectors })
    }

    pub fn zeros(n: usize) -> Self {
        Self { vectors: vec![[0.0; 3]; n] }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec3] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec3> {
        self.vectors
    }
}

/// Displace every point of `cloud` by the matching flow vector. Features are
/// carried through unchanged.
pub fn warp(cloud: &PointCloud, flow: &FlowField) -> Result<PointCloud> {
    if flow.len() != cloud.len() {
        return Err(Error::Dimension(format!(
            "flow length {} does not match cloud point count {}",
            flow.len(),
            cloud.len()
        )));
    }
    let points: Vec<Vec3> = cloud
        .points()
        .iter()
        .zip(flow.vectors())
        .map(|(p, d)| math::add(*p, *d))
        .collect();
    Ok(PointCloud { points, features: cloud.features.clone() })
}
