//! Central finite-difference gradients for verifying analytic derivatives.
//! Independent of every analytic path in this crate by construction: it only
//! evaluates the supplied closure.

/// Central-difference gradient of `f` at `point` with step `eps`:
/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` per coordinate.
pub fn finite_diff_grad<F>(f: F, point: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let plus = f(&probe);
        probe[i] = point[i] - eps;
        let minus = f(&probe);
        probe[i] = point[i];
        grads.push((plus - minus) / (2.0 * eps));
    }
    grads
}

/// `|a - b| / max(|b|, tiny)` in the Euclidean norm.
pub fn relative_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |v: &[f64]| v[0] * v[0] + 2.0 * v[0] * v[1] + v[1] * v[1];
        let g = finite_diff_grad(f, &[3.0, 4.0], 1e-6);
        assert!((g[0] - 14.0).abs() < 1e-6);
        assert!((g[1] - 14.0).abs() < 1e-6);
    }

    #[test]
    fn relative_diff_of_equal_vectors_is_zero() {
        assert_eq!(relative_norm_diff(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    }
}
