//! Self-supervised 3D scene-flow estimation for point-cloud pairs.
//!
//! Each cloud is represented as an isotropic Gaussian mixture (one component
//! per point, shared variance, uniform weights) and flow is recovered by
//! minimizing the closed-form Cauchy-Schwarz divergence between the warped
//! source mixture and the target mixture, optionally regularized by an L1
//! graph Laplacian over the source's KNN graph. Chamfer distance and
//! (entropic) Earth Mover's distance are included as comparison baselines,
//! along with synthetic scene generation, evaluation metrics, and plain-text
//! I/O.
//!
//! Heavy pairwise loops parallelize over rows with rayon when the `parallel`
//! feature (default) is enabled; the sequential fallback produces
//! bit-identical results.

pub mod cloud;
pub mod correspondence;
pub mod divergence;
mod error;
pub mod gradcheck;
pub mod io;
pub mod math;
pub mod metrics;
pub mod optimizer;
mod par;
pub mod regularizer;
pub mod synth;

pub use cloud::{warp, FlowField, GmmSpec, PointCloud};
pub use divergence::{
    chamfer_distance, cs_divergence, cs_divergence_numeric, cs_divergence_parts,
    cs_divergence_with, emd_approx, emd_exact, gaussian_log_density, gaussian_product_identity,
    CsOptions, DivergenceValue,
};
pub use error::{Error, Result};
pub use metrics::{evaluate_flow, evaluate_flow_with, FlowMetrics, MetricThresholds};
pub use optimizer::{
    estimate_flow, objective, silverman_bandwidth, Bandwidth, LossKind, OptimizeConfig,
    OptimizeReport,
};
pub use regularizer::{build_knn_graph, laplacian_loss, KnnGraph};
pub use synth::{generate, RigidMotion, Scene, SceneRecipe, SceneShape};
