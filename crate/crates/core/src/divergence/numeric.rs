//! Quadrature oracle for the CS divergence: evaluates the three defining
//! integrals directly on a padded bounding-box grid with the trapezoid rule.
//! Size-gated; intended for tests cross-checking the closed form, not for
//! production evaluation.

use crate::cloud::{GmmSpec, PointCloud};
use crate::divergence::gaussian::check_variance;
use crate::error::{Error, Result};
use crate::math::{Vec3, LN_2PI};
use crate::par::map_rows;

const MAX_ORACLE_POINTS: usize = 32;
const MIN_RESOLUTION: usize = 32;
const PAD_STDDEVS: f64 = 5.0;

/// Numerically integrate `-log( int G_a G_b / sqrt(int G_a^2 int G_b^2) )`
/// over a grid of `resolution` nodes per axis covering both clouds padded by
/// five standard deviations.
pub fn cs_divergence_numeric(
    a: &PointCloud,
    b: &PointCloud,
    spec_a: &GmmSpec,
    spec_b: &GmmSpec,
    resolution: usize,
) -> Result<f64> {
    if a.len() > MAX_ORACLE_POINTS || b.len() > MAX_ORACLE_POINTS {
        return Err(Error::SizeLimit(format!(
            "quadrature oracle accepts at most {MAX_ORACLE_POINTS} points per cloud, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidParameter(format!(
            "quadrature resolution must be at least {MIN_RESOLUTION} nodes per axis, got {resolution}"
        )));
    }
    check_variance(spec_a.variance())?;
    check_variance(spec_b.variance())?;
    spec_a.check_matches(a.len(), "mixture a")?;
    spec_b.check_matches(b.len(), "mixture b")?;

    let pad = PAD_STDDEVS * spec_a.variance().sqrt().max(spec_b.variance().sqrt());
    let (mut lo, mut hi) = a.bounding_box();
    let (blo, bhi) = b.bounding_box();
    for d in 0..3 {
        lo[d] = lo[d].min(blo[d]) - pad;
        hi[d] = hi[d].max(bhi[d]) + pad;
    }

    let steps: Vec<f64> = (0..3).map(|d| (hi[d] - lo[d]) / (resolution - 1) as f64).collect();
    let axis_weight = |k: usize| if k == 0 || k == resolution - 1 { 0.5 } else { 1.0 };
    let cell = steps[0] * steps[1] * steps[2];

    let ga = MixtureEval::new(a, spec_a);
    let gb = MixtureEval::new(b, spec_b);

    // One grid pass accumulates all three integrals; parallel over z-slabs,
    // combined in slab order.
    let slabs = map_rows(resolution, false, |iz| {
        let z = lo[2] + iz as f64 * steps[2];
        let wz = axis_weight(iz);
        let mut cross = 0.0;
        let mut self_a = 0.0;
        let mut self_b = 0.0;
        for iy in 0..resolution {
            let y = lo[1] + iy as f64 * steps[1];
            let wyz = wz * axis_weight(iy);
            for ix in 0..resolution {
                let x = lo[0] + ix as f64 * steps[0];
                let w = wyz * axis_weight(ix);
                let da = ga.density([x, y, z]);
                let db = gb.density([x, y, z]);
                cross += w * da * db;
                self_a += w * da * da;
                self_b += w * db * db;
            }
        }
        (cross, self_a, self_b)
    });
    let (mut cross, mut self_a, mut self_b) = (0.0, 0.0, 0.0);
    for (c, sa, sb) in slabs {
        cross += c;
        self_a += sa;
        self_b += sb;
    }
    cross *= cell;
    self_a *= cell;
    self_b *= cell;

    if !(cross > 0.0 && self_a > 0.0 && self_b > 0.0) {
        return Err(Error::InvalidParameter(
            "quadrature integrals are not positive; grid too coarse or clouds too far apart".into(),
        ));
    }
    Ok(-(cross.ln() - 0.5 * self_a.ln() - 0.5 * self_b.ln()))
}

struct MixtureEval {
    points: Vec<Vec3>,
    inv_two_var: f64,
    weight_norm: f64,
}

impl MixtureEval {
    fn new(cloud: &PointCloud, spec: &GmmSpec) -> Self {
        let log_norm = -1.5 * (LN_2PI + spec.variance().ln());
        Self {
            points: cloud.points().to_vec(),
            inv_two_var: 1.0 / (2.0 * spec.variance()),
            weight_norm: spec.weight() * log_norm.exp(),
        }
    }

    fn density(&self, x: Vec3) -> f64 {
        let mut sum = 0.0;
        for p in &self.points {
            let dx = x[0] - p[0];
            let dy = x[1] - p[1];
            let dz = x[2] - p[2];
            sum += (-(dx * dx + dy * dy + dz * dz) * self.inv_two_var).exp();
        }
        self.weight_norm * sum
    }
}
