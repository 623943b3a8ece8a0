//! Dissimilarity measures between point clouds: the closed-form
//! Cauchy-Schwarz divergence between isotropic Gaussian mixtures, Chamfer
//! distance and Earth Mover's distance baselines, and a quadrature oracle
//! used to cross-check the closed form.

mod chamfer;
mod cs;
mod emd;
pub mod gaussian;
mod numeric;

pub use chamfer::chamfer_distance;
pub use cs::{
    cs_divergence, cs_divergence_parts, cs_divergence_with, self_term_lse, CrossTermTable,
    CsOptions, CsParts, DEFAULT_DENSE_PAIR_LIMIT,
};
pub(crate) use cs::cs_with_cached_target_term;
pub use emd::{emd_approx, emd_exact, EmdApprox};
pub(crate) use emd::{sinkhorn_cost, sinkhorn_grad, sinkhorn_run, SinkhornState};
pub use gaussian::{gaussian_log_density, gaussian_product_identity};
pub use numeric::cs_divergence_numeric;

use crate::math::Vec3;

/// A divergence evaluation: the scalar value plus, when requested, the
/// gradient with respect to the first cloud's points.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceValue {
    pub value: f64,
    pub gradient: Option<Vec<Vec3>>,
}
