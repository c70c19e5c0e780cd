//! Standard normal distribution function and its inverse.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// 1 − Φ(z), computed without cancellation in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// Φ⁻¹(p) for p strictly inside (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "normal quantile probability",
            value: p,
        });
    }
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    // One Halley step against the accurate Φ.
    let err = if p < 0.5 { normal_cdf(z) - p } else { (1.0 - p) - normal_sf(z) };
    let u = err * (2.0 * PI).sqrt() * (0.5 * z * z).exp();
    Ok(z - u / (1.0 + 0.5 * z * u))
}
