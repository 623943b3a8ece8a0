//! Small numeric helpers shared across the crate: 3-vector arithmetic,
//! stable log-sum-exp, and closed-form 3x3 symmetric eigenvalues.

/// ln(2*pi), used by the Gaussian log-density normalizer.
pub const LN_2PI: f64 = 1.8378770664093453;

pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: Vec3, b: Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn is_finite3(a: Vec3) -> bool {
    a[0].is_finite() && a[1].is_finite() && a[2].is_finite()
}

/// Stable log(sum(exp(v))) over a slice, shifting by the maximum.
///
/// Returns `NEG_INFINITY` for an empty slice or when every entry is `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Combine two partial log-sum-exp results: logsumexp([a, b]).
#[inline]
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, descending.
///
/// Trigonometric closed form for the characteristic cubic; exact enough for
/// covariance descriptors, no iteration.
pub fn sym3_eigenvalues(a: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if p1 == 0.0 {
        let mut eig = [a[0][0], a[1][1], a[2][2]];
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        return eig;
    }
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let inv_p = 1.0 / p;
    let mut b = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = a[i][j] * inv_p;
        }
        b[i][i] = (a[i][i] - q) * inv_p;
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let eig1 = q + 2.0 * p * phi.cos();
    let eig3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let eig2 = 3.0 * q - eig1 - eig3;
    [eig1, eig2, eig3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_naive_on_small_values() {
        let v = [-1.0f64, -2.0, -3.0];
        let naive = (v.iter().map(|x| x.exp()).sum::<f64>()).ln();
        assert!((logsumexp(&v) - naive).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_magnitudes() {
        let v = [-2.5e9, -2.5e9 + 1.0, -2.5e9 - 3.0];
        let got = logsumexp(&v);
        assert!(got.is_finite());
        // shift-invariance: logsumexp(v + c) = logsumexp(v) + c, up to the
        // absolute rounding floor at magnitude 2.5e9
        let shifted: Vec<f64> = v.iter().map(|x| x + 2.5e9).collect();
        assert!((got + 2.5e9 - logsumexp(&shifted)).abs() < 1e-5);
    }

    #[test]
    fn logsumexp_empty_is_neg_inf() {
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn logsumexp2_agrees_with_slice_version() {
        assert!((logsumexp2(0.5, 2.0) - logsumexp(&[0.5, 2.0])).abs() < 1e-15);
        assert!((logsumexp2(12.0, 5.0) - logsumexp(&[12.0, 5.0])).abs() < 1e-15);
    }

    #[test]
    fn sym3_eigenvalues_diagonal() {
        let a = [[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let eig = sym3_eigenvalues(&a);
        assert_eq!(eig, [3.0, 2.0, 1.0]);
    }

    #[test]
    fn sym3_eigenvalues_known_matrix() {
        // eigenvalues of [[2,1,0],[1,2,0],[0,0,5]] are 5, 3, 1
        let a = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let eig = sym3_eigenvalues(&a);
        assert!((eig[0] - 5.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
        assert!((eig[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym3_eigenvalues_trace_preserved() {
        let a = [[1.3, 0.2, -0.4], [0.2, 2.1, 0.7], [-0.4, 0.7, 0.9]];
        let eig = sym3_eigenvalues(&a);
        let trace = a[0][0] + a[1][1] + a[2][2];
        assert!((eig.iter().sum::<f64>() - trace).abs() < 1e-12);
        assert!(eig[0] >= eig[1] && eig[1] >= eig[2]);
    }
}
