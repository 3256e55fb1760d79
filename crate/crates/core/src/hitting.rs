//! First-passage distribution of a Bessel process to level 1.
//!
//! For `d`-dimensional Brownian motion started at distance `r > 1` from the
//! origin, `P(tau_{r,1} <= tau)` is the probability of entering the closed
//! unit ball by time `tau`. Its Laplace transform in `tau` is
//! `r^{-v} K_v(r sqrt(2 lambda)) / (lambda K_v(sqrt(2 lambda)))` with
//! `v = (d - 2)/2`; odd `d` below 5 have erfc closed forms, everything else
//! goes through contour inversion.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::laplace;
use crate::specfun::{bessel_k_scaled, erfc};

/// Query for `P(tau_{r,1} <= tau)` in dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingSpec {
    pub d: usize,
    pub r: f64,
    pub tau: f64,
}

impl HittingSpec {
    /// `r = 1` is accepted and means "already on the sphere".
    pub fn new(d: usize, r: f64, tau: f64) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(r >= 1.0) || !r.is_finite() {
            return Err(invalid(format!("start radius must be >= 1, got {r}")));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(invalid(format!("horizon must be >= 0, got {tau}")));
        }
        Ok(Self { d, r, tau })
    }

    /// Bessel index `(d - 2)/2`.
    pub fn bessel_index(&self) -> f64 {
        bessel_index(self.d)
    }
}

pub fn bessel_index(d: usize) -> f64 {
    (d as f64 - 2.0) / 2.0
}

/// Laplace transform of `tau -> P(tau_{r,1} <= tau)` at `lambda`.
///
/// Defined for `lambda` off the closed negative real axis (the principal
/// square root keeps the Bessel argument in the right half plane).
pub fn hitting_cdf_laplace(r: f64, v: f64, lambda: Complex64) -> Result<Complex64> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(invalid(format!("start radius must be >= 1, got {r}")));
    }
    if lambda.im == 0.0 && lambda.re <= 0.0 {
        return Err(Error::Domain(format!(
            "transform is not defined on the negative real axis, got lambda = {lambda}"
        )));
    }
    if r == 1.0 {
        return Ok(lambda.inv());
    }
    let z = (2.0 * lambda).sqrt();
    let num = bessel_k_scaled(v, z * r)?;
    let den = bessel_k_scaled(v, z)?;
    Ok((-(r - 1.0) * z).exp() * num / den * r.powf(-v) / lambda)
}

fn trivial_value(spec: &HittingSpec) -> Option<f64> {
    if spec.r == 1.0 {
        return Some(1.0);
    }
    if spec.tau == 0.0 {
        return Some(0.0);
    }
    None
}

fn gaussian_argument(spec: &HittingSpec) -> f64 {
    (spec.r - 1.0) / (2.0 * spec.tau).sqrt()
}

/// `P(tau_{r,1} <= tau)`.
pub fn hitting_cdf(spec: &HittingSpec) -> Result<f64> {
    if let Some(v) = trivial_value(spec) {
        return Ok(v);
    }
    match spec.d {
        1 => Ok(erfc(gaussian_argument(spec))),
        3 => Ok(erfc(gaussian_argument(spec)) / spec.r),
        _ => hitting_cdf_inverted(spec),
    }
}

/// `P(tau_{r,1} <= tau)` through the contour inversion for every `d`,
/// bypassing the closed forms. Very short horizons,
/// `tau < 1e-3 (r - 1)^2`, use the Gaussian-tail leading term
/// `r^{-(d-1)/2} erfc((r - 1)/sqrt(2 tau))` instead.
pub fn hitting_cdf_inverted(spec: &HittingSpec) -> Result<f64> {
    if let Some(v) = trivial_value(spec) {
        return Ok(v);
    }
    let r = spec.r;
    if spec.tau < 1e-3 * (r - 1.0) * (r - 1.0) {
        let v = spec.bessel_index();
        return Ok(r.powf(-(v + 0.5)) * erfc(gaussian_argument(spec)));
    }
    let v = spec.bessel_index();
    let p = laplace::invert(|lambda| hitting_cdf_laplace(r, v, lambda), spec.tau)?;
    Ok(p.clamp(0.0, 1.0))
}

/// `r^k P(tau_{r,1} <= tau)`.
pub fn tail_value(spec: &HittingSpec, k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(invalid(format!("tail exponent must be >= 0, got {k}")));
    }
    Ok(spec.r.powf(k) * hitting_cdf(spec)?)
}

/// Which two-sided estimate the bound shape comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundRegime {
    /// d = 1: the exact first-passage density of a reflected Brownian motion.
    Line,
    /// d = 2, `tau >= 2 r^2`: the planar uniform estimate on the density.
    Planar,
    /// d = 2, `tau < 2 r^2`: the logarithmic upper bound on the probability itself.
    LogBound,
    /// d >= 3: the uniform estimate on the density.
    HighDim,
}

/// Structural shape of the first-passage density bound with all unknown
/// constants set to one. Only useful up to a fixed multiplicative factor.
pub fn hitting_density_bound(spec: &HittingSpec) -> Result<(f64, BoundRegime)> {
    let (d, r, tau) = (spec.d, spec.r, spec.tau);
    if !(r > 1.0) || !(tau > 0.0) {
        return Err(invalid("density bound needs r > 1 and tau > 0"));
    }
    let gauss = (-(r - 1.0) * (r - 1.0) / (2.0 * tau)).exp();
    let out = match d {
        1 => ((r - 1.0) * gauss * tau.powf(-1.5), BoundRegime::Line),
        2 if tau < 2.0 * r * r => ((-r * r / tau).exp() / r.ln(), BoundRegime::LogBound),
        2 => {
            let logs = (1.0 + r.ln()) / ((1.0 + (1.0 + tau / r).ln()) * (1.0 + (tau + r).ln()));
            let shape = (r - 1.0) / r * gauss * (r + tau).sqrt() * tau.powf(-1.5) * logs;
            (shape, BoundRegime::Planar)
        }
        _ => {
            let e = (d as f64 - 3.0) / 2.0;
            let shape = (r - 1.0) / r * gauss * tau.powf(-1.5) / (tau.powf(e) + r.powf(e));
            (shape, BoundRegime::HighDim)
        }
    };
    Ok(out)
}
