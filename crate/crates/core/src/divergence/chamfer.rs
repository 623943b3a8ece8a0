//! Chamfer distance: symmetric sum of mean squared nearest-neighbor
//! distances, with a deterministic subgradient (ties pick the lowest index).

use crate::cloud::PointCloud;
use crate::divergence::DivergenceValue;
use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::par::map_rows;

pub fn chamfer_distance(
    a: &PointCloud,
    b: &PointCloud,
    want_gradient: bool,
) -> Result<DivergenceValue> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dimension("Chamfer distance needs nonempty clouds".into()));
    }
    let a_pts = a.points();
    let b_pts = b.points();
    let matches_ab = nearest_matches(a_pts, b_pts);
    let matches_ba = nearest_matches(b_pts, a_pts);

    let n = a_pts.len() as f64;
    let m = b_pts.len() as f64;
    let sum_ab: f64 = matches_ab.iter().map(|&(_, d2)| d2).sum();
    let sum_ba: f64 = matches_ba.iter().map(|&(_, d2)| d2).sum();
    let value = sum_ab / n + sum_ba / m;

    let gradient = want_gradient.then(|| {
        let mut grad = vec![[0.0f64; 3]; a_pts.len()];
        for (i, &(j, _)) in matches_ab.iter().enumerate() {
            let d = math::scale(math::sub(a_pts[i], b_pts[j]), 2.0 / n);
            grad[i] = math::add(grad[i], d);
        }
        for (j, &(i, _)) in matches_ba.iter().enumerate() {
            let d = math::scale(math::sub(a_pts[i], b_pts[j]), 2.0 / m);
            grad[i] = math::add(grad[i], d);
        }
        grad
    });

    Ok(DivergenceValue { value, gradient })
}

/// For each query point, the index of its nearest neighbor in `targets` and
/// the squared distance. Ties resolve to the lowest index.
fn nearest_matches(queries: &[Vec3], targets: &[Vec3]) -> Vec<(usize, f64)> {
    map_rows(queries.len(), false, |i| {
        let q = queries[i];
        let mut best = (0usize, f64::INFINITY);
        for (j, t) in targets.iter().enumerate() {
            let d2 = math::dist_sq(q, *t);
            if d2 < best.1 {
                best = (j, d2);
            }
        }
        best
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_clouds_give_zero() {
        let a = PointCloud::new(vec![[0.0; 3], [1.0, 2.0, 3.0]]).unwrap();
        let d = chamfer_distance(&a, &a, false).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn hand_enumerated_example() {
        // a={origin}, b={(1,0,0),(3,0,0)}: 1 + (1+9)/2 = 6
        let a = PointCloud::new(vec![[0.0; 3]]).unwrap();
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]).unwrap();
        let d = chamfer_distance(&a, &b, false).unwrap();
        assert!((d.value - 6.0).abs() < 1e-15);
    }

    #[test]
    fn permuting_b_leaves_value_unchanged() {
        let a = PointCloud::new(vec![[0.0; 3], [0.5, 0.5, 0.0]]).unwrap();
        let b = PointCloud::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 0.3]])
            .unwrap();
        let b_perm = PointCloud::new(vec![[0.3, 0.3, 0.3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
            .unwrap();
        let d1 = chamfer_distance(&a, &b, false).unwrap();
        let d2 = chamfer_distance(&a, &b_perm, false).unwrap();
        assert!((d1.value - d2.value).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a: Vec<[f64; 3]> = (0..6)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let b: Vec<[f64; 3]> = (0..9)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect();
            let a = PointCloud::new(a).unwrap();
            let b = PointCloud::new(b).unwrap();
            let ab = chamfer_distance(&a, &b, false).unwrap().value;
            let ba = chamfer_distance(&b, &a, false).unwrap().value;
            assert_eq!(ab.to_bits(), ba.to_bits());
        }
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a: Vec<[f64; 3]> = (0..7)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let b: Vec<[f64; 3]> = (0..9)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let a = PointCloud::new(a).unwrap();
        let b = PointCloud::new(b).unwrap();
        let d = chamfer_distance(&a, &b, true).unwrap();
        let grad: Vec<f64> = d.gradient.unwrap().iter().flatten().copied().collect();
        let flat: Vec<f64> = a.points().iter().flatten().copied().collect();
        let fd = gradcheck::finite_diff_grad(
            |x| {
                let pts: Vec<[f64; 3]> = x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
                chamfer_distance(&PointCloud::new(pts).unwrap(), &b, false).unwrap().value
            },
            &flat,
            1e-6,
        );
        let rel = gradcheck::relative_norm_diff(&grad, &fd);
        assert!(rel < 1e-6, "relative gradient error {rel}");
    }

    #[test]
    fn empty_cloud_rejected_at_construction() {
        assert!(PointCloud::new(vec![]).is_err());
    }
}
