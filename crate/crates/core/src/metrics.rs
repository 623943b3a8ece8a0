//! End-point-error evaluation of an estimated flow against ground truth.

use crate::cloud::FlowField;
use crate::error::{Error, Result};
use crate::math;

/// Accuracy/outlier thresholds. Defaults follow the standard benchmark
/// definitions; override only for experimentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricThresholds {
    /// Absolute error below which a point counts as strictly accurate (m).
    pub strict_abs: f64,
    /// Relative error below which a point counts as strictly accurate.
    pub strict_rel: f64,
    /// Absolute error below which a point counts as relaxed-accurate (m).
    pub relaxed_abs: f64,
    /// Relative error below which a point counts as relaxed-accurate.
    pub relaxed_rel: f64,
    /// Absolute error above which a point counts as an outlier (m).
    pub outlier_abs: f64,
    /// Relative error above which a point counts as an outlier.
    pub outlier_rel: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self {
            strict_abs: 0.05,
            strict_rel: 0.05,
            relaxed_abs: 0.1,
            relaxed_rel: 0.1,
            outlier_abs: 0.3,
            outlier_rel: 0.1,
        }
    }
}

/// Summary of an estimated flow against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    /// Mean Euclidean end-point error in meters.
    pub epe3d: f64,
    /// Fraction of points with error < 0.05 m or relative error < 5%.
    pub acc3d_strict: f64,
    /// Fraction of points with error < 0.1 m or relative error < 10%.
    pub acc3d_relaxed: f64,
    /// Fraction of points with error > 0.3 m or relative error > 10%.
    pub outliers3d: f64,
}

/// Evaluate with the standard thresholds.
pub fn evaluate_flow(estimated: &FlowField, ground_truth: &FlowField) -> Result<FlowMetrics> {
    evaluate_flow_with(estimated, ground_truth, &MetricThresholds::default())
}

/// Evaluate with explicit thresholds.
///
/// The relative error is the per-point error norm divided by the ground-truth
/// norm; a zero ground-truth norm leaves the relative criterion unmet and only
/// the absolute thresholds apply.
pub fn evaluate_flow_with(
    estimated: &FlowField,
    ground_truth: &FlowField,
    thresholds: &MetricThresholds,
) -> Result<FlowMetrics> {
    if estimated.len() != ground_truth.len() {
        return Err(Error::Dimension(format!(
            "estimated flow has {} vectors but ground truth has {}",
            estimated.len(),
            ground_truth.len()
        )));
    }
    let n = estimated.len() as f64;
    let mut epe_sum = 0.0;
    let mut strict = 0usize;
    let mut relaxed = 0usize;
    let mut outliers = 0usize;
    for (est, truth) in estimated.vectors().iter().zip(ground_truth.vectors()) {
        let err = math::norm(math::sub(*est, *truth));
        epe_sum += err;
        let truth_norm = math::norm(*truth);
        // rel = infinity encodes "relative criterion unmet" for both the
        // accuracy (<) and outlier (>) comparisons when the truth is static.
        let rel = if truth_norm > 0.0 { err / truth_norm } else { f64::INFINITY };
        let rel_outlier = if truth_norm > 0.0 { rel > thresholds.outlier_rel } else { false };
        if err < thresholds.strict_abs || rel < thresholds.strict_rel {
            strict += 1;
        }
        if err < thresholds.relaxed_abs || rel < thresholds.relaxed_rel {
            relaxed += 1;
        }
        if err > thresholds.outlier_abs || rel_outlier {
            outliers += 1;
        }
    }
    Ok(FlowMetrics {
        epe3d: epe_sum / n,
        acc3d_strict: strict as f64 / n,
        acc3d_relaxed: relaxed as f64 / n,
        outliers3d: outliers as f64 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::FlowField;

    #[test]
    fn perfect_estimate() {
        let truth = FlowField::new(vec![[0.2, -0.1, 0.4]; 5]).unwrap();
        let m = evaluate_flow(&truth, &truth).unwrap();
        assert_eq!(m.epe3d, 0.0);
        assert_eq!(m.acc3d_strict, 1.0);
        assert_eq!(m.acc3d_relaxed, 1.0);
        assert_eq!(m.outliers3d, 0.0);
    }

    #[test]
    fn small_constant_error_is_strictly_accurate() {
        let truth = FlowField::new(vec![[1.0, 0.0, 0.0]; 10]).unwrap();
        let est = FlowField::new(vec![[1.04, 0.0, 0.0]; 10]).unwrap();
        let m = evaluate_flow(&est, &truth).unwrap();
        assert!((m.epe3d - 0.04).abs() < 1e-15);
        assert_eq!(m.acc3d_strict, 1.0);
        assert_eq!(m.acc3d_relaxed, 1.0);
        assert_eq!(m.outliers3d, 0.0);
    }

    #[test]
    fn large_error_is_an_outlier() {
        let truth = FlowField::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        let est = FlowField::new(vec![[1.5, 0.0, 0.0]]).unwrap();
        let m = evaluate_flow(&est, &truth).unwrap();
        assert!((m.epe3d - 0.5).abs() < 1e-15);
        assert_eq!(m.acc3d_strict, 0.0);
        assert_eq!(m.acc3d_relaxed, 0.0);
        assert_eq!(m.outliers3d, 1.0);
    }

    #[test]
    fn zero_truth_uses_absolute_thresholds_only() {
        let truth = FlowField::new(vec![[0.0; 3]; 2]).unwrap();
        let est = FlowField::new(vec![[0.04, 0.0, 0.0], [0.4, 0.0, 0.0]]).unwrap();
        let m = evaluate_flow(&est, &truth).unwrap();
        // 0.04 < 0.05 absolute; relative criterion unmet but irrelevant
        assert_eq!(m.acc3d_strict, 0.5);
        // 0.4 > 0.3 absolute; the second point is an outlier, the first is not
        assert_eq!(m.outliers3d, 0.5);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let a = FlowField::zeros(3);
        let b = FlowField::zeros(4);
        assert!(evaluate_flow(&a, &b).is_err());
    }

    #[test]
    fn permutation_invariant_under_consistent_reordering() {
        let truth = FlowField::new(vec![[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
            .unwrap();
        let est = FlowField::new(vec![[1.1, 0.0, 0.0], [0.0, 2.3, 0.0], [0.0, 0.0, 2.5]])
            .unwrap();
        let m1 = evaluate_flow(&est, &truth).unwrap();
        let perm = [2usize, 0, 1];
        let truth_p =
            FlowField::new(perm.iter().map(|&i| truth.vectors()[i]).collect()).unwrap();
        let est_p = FlowField::new(perm.iter().map(|&i| est.vectors()[i]).collect()).unwrap();
        let m2 = evaluate_flow(&est_p, &truth_p).unwrap();
        assert!((m1.epe3d - m2.epe3d).abs() < 1e-15);
        assert_eq!(m1.acc3d_strict, m2.acc3d_strict);
        assert_eq!(m1.acc3d_relaxed, m2.acc3d_relaxed);
        assert_eq!(m1.outliers3d, m2.outliers3d);
    }
}
