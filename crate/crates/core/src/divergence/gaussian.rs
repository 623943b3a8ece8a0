//! Isotropic Gaussian log-density and the product-of-Gaussians identity.

use crate::error::{Error, Result};
use crate::math::{self, Vec3, LN_2PI};

/// Log-density of an isotropic 3D Gaussian `N(x | mu, variance * I)`:
/// `-|x-mu|^2 / (2 variance) - (3/2) ln(2 pi) - (3/2) ln(variance)`.
pub fn gaussian_log_density(x: Vec3, mu: Vec3, variance: f64) -> Result<f64> {
    check_variance(variance)?;
    Ok(-math::dist_sq(x, mu) / (2.0 * variance) - 1.5 * (LN_2PI + variance.ln()))
}

/// The product of two isotropic Gaussian densities is a scaled Gaussian:
/// `N(x|mu1,v1) N(x|mu2,v2) = N(mu1|mu2, v1+v2) N(x|mu12, v12)`.
///
/// Returns `(carrier_log_density, mu12, var12)` where the carrier is the
/// x-independent factor `N(mu1 | mu2, v1 + v2)` in log domain,
/// `mu12 = (v2 mu1 + v1 mu2) / (v1 + v2)` and `var12 = v1 v2 / (v1 + v2)`.
pub fn gaussian_product_identity(
    mu1: Vec3,
    var1: f64,
    mu2: Vec3,
    var2: f64,
) -> Result<(f64, Vec3, f64)> {
    check_variance(var1)?;
    check_variance(var2)?;
    let var_sum = var1 + var2;
    let carrier = gaussian_log_density(mu1, mu2, var_sum)?;
    let mu12 = math::scale(
        math::add(math::scale(mu1, var2), math::scale(mu2, var1)),
        1.0 / var_sum,
    );
    let var12 = var1 * var2 / var_sum;
    Ok((carrier, mu12, var12))
}

pub(crate) fn check_variance(variance: f64) -> Result<()> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "variance must be positive and finite, got {variance}"
        )));
    }
    Ok(())
}
