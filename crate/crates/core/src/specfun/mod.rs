//! Special functions used by the analytic reference stack.
//!
//! `erfc` and `gamma` are thin wrappers over `libm` with the domain checks
//! this crate needs; the modified Bessel function of the second kind is
//! implemented in [`bessel`] for complex arguments in the right half plane.

mod bessel;

pub use bessel::{bessel_k, bessel_k_pair_scaled, bessel_k_prime, bessel_k_scaled};

use crate::error::{invalid, Result};

/// Complex argument type used for Bessel and Laplace-domain evaluations.
pub type ComplexValue = num_complex::Complex64;

/// Complementary error function `2/sqrt(pi) * int_z^inf exp(-t^2) dt`.
pub fn erfc(z: f64) -> f64 {
    libm::erfc(z)
}

/// Gamma function for positive real arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(invalid(format!("gamma requires x > 0, got {x}")));
    }
    Ok(libm::tgamma(x))
}

/// Surface area of the unit sphere in `R^d`, `d pi^{d/2} / Gamma(d/2 + 1)`.
pub fn unit_sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    d as f64 * std::f64::consts::PI.powf(half) / libm::tgamma(half + 1.0)
}
