//! Numerical inversion of Laplace transforms on a Talbot (cotangent)
//! contour.
//!
//! The contour is `s(theta) = (n/t) (-0.6122 + 0.5017 theta cot(0.6407 theta)
//! + 0.2645 i theta)` for `theta in (-pi, pi)`, discretised with the midpoint
//! rule. These parameters balance discretisation error (about
//! `exp(-1.358 n)`) against round-off amplification (`exp(0.171 n)`), so the
//! node count stays moderate in double precision. Valid for transforms that
//! are analytic off the closed negative real axis and decay at infinity.

use num_complex::Complex64;

use crate::error::{Error, Result};

const SIGMA: f64 = -0.6122;
const MU: f64 = 0.5017;
const ALPHA: f64 = 0.6407;
const NU: f64 = 0.2645;

/// Node counts tried in order (doubling); the first pair of successive estimates that
/// agree within the tolerance ends the search.
pub const NODE_SCHEDULE: [usize; 3] = [24, 48, 96];

/// Agreement required between successive estimates.
pub const AGREEMENT_TOL: f64 = 1e-8;

/// Inverts `transform` at `t > 0` with `n` contour nodes (`n` even). The
/// transform must satisfy `F(conj s) = conj F(s)`.
pub fn talbot_fixed<F>(transform: &F, t: f64, n: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    debug_assert!(n % 2 == 0 && t > 0.0);
    let scale = n as f64 / t;
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let mut acc = 0.0;
    // conjugate symmetry: only the upper half of the contour is evaluated
    for k in 0..n / 2 {
        let theta = (k as f64 + 0.5) * h;
        let at = ALPHA * theta;
        let cot = at.cos() / at.sin();
        let s = Complex64::new(SIGMA + MU * theta * cot, NU * theta) * scale;
        let ds = Complex64::new(MU * (cot - at / (at.sin() * at.sin())), NU) * scale;
        let term = (s * t).exp() * transform(s)? * ds;
        acc += term.im;
    }
    Ok(acc * 2.0 / n as f64)
}

/// Inverts with the node schedule in [`NODE_SCHEDULE`], returning the
/// estimate at the first node count that agrees with its predecessor.
pub fn invert<F>(transform: F, t: f64) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "inversion time must be positive and finite, got {t}"
        )));
    }
    let mut previous = talbot_fixed(&transform, t, NODE_SCHEDULE[0])?;
    let mut last = previous;
    for &n in &NODE_SCHEDULE[1..] {
        last = talbot_fixed(&transform, t, n)?;
        if (last - previous).abs() < AGREEMENT_TOL {
            return Ok(last);
        }
        previous = last;
    }
    Err(Error::InversionNotConverged {
        t,
        previous,
        last,
        nodes: *NODE_SCHEDULE.last().expect("non-empty"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_elementary_transforms() {
        // 1/(s+1) -> e^{-t}
        for &t in &[0.1, 1.0, 5.0] {
            let got = invert(|s| Ok((s + 1.0).inv()), t).unwrap();
            assert!((got - (-t as f64).exp()).abs() < 1e-10, "t={t}");
        }
        // 1/s^2 -> t
        let got = invert(|s| Ok((s * s).inv()), 2.5).unwrap();
        assert!((got - 2.5).abs() < 1e-10);
    }

    #[test]
    fn inverts_branch_point_transform() {
        // e^{-a sqrt(s)}/s -> erfc(a / (2 sqrt t))
        let a = 1.3;
        for &t in &[0.05, 0.5, 3.0] {
            let got = invert(|s| Ok((-a * s.sqrt()).exp() / s), t).unwrap();
            let want = libm::erfc(a / (2.0 * (t as f64).sqrt()));
            assert!((got - want).abs() < 1e-10, "t={t} got={got} want={want}");
        }
    }

    #[test]
    fn rejects_non_positive_time() {
        assert!(invert(|s| Ok(s.inv()), 0.0).is_err());
        assert!(invert(|s| Ok(s.inv()), -1.0).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        // the pole at s = 10 is crossed by the contour between schedule steps
        let err = invert(|s| Ok((s - 10.0).inv()), 1.0).unwrap_err();
        assert!(matches!(err, Error::InversionNotConverged { .. }));
    }
}
