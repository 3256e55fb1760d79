//! Modified Bessel function of the second kind `K_v(z)` for real order and
//! complex `z` with `Re(z) > 0`.
//!
//! Evaluation paths, all in exponentially scaled form `e^z K_v(z)`:
//!
//! * half-integer order: the terminating closed-form sum;
//! * `|z| >= 15`: the large-argument asymptotic series, when it reaches
//!   machine precision before its terms start growing;
//! * `|z| <= 2`: Temme's power series for `K_mu`, `K_{mu+1}`, `|mu| <= 1/2`;
//! * otherwise: Steed's continued fraction (Temme's CF2).
//!
//! The non-closed-form paths produce a pair at the reduced order and reach
//! the requested order by forward recurrence, which is stable for `K`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 20_000;
const SERIES_RADIUS: f64 = 2.0;
const ASYMPTOTIC_RADIUS: f64 = 15.0;
/// Beyond this `Re(z)` the unscaled value underflows a double.
const UNDERFLOW_RE: f64 = 700.0;

/// Taylor coefficients of `1/Gamma(1 + x)` about zero.
const RECIP_GAMMA: [f64; 29] = [
    1.0,
    0.577_215_664_901_532_860_61,
    -0.655_878_071_520_253_881_08,
    -0.042_002_635_034_095_235_529,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_748,
    -0.009_621_971_527_876_973_562_1,
    0.007_218_943_246_663_099_542_4,
    -0.001_165_167_591_859_065_112_1,
    -0.000_215_241_674_114_950_972_82,
    0.000_128_050_282_388_116_186_15,
    -0.000_020_134_854_780_788_238_656,
    -1.250_493_482_142_670_657_3e-6,
    1.133_027_231_981_695_882_4e-6,
    -2.056_338_416_977_607_103_5e-7,
    6.116_095_104_481_415_817_9e-9,
    5.002_007_644_469_222_930_1e-9,
    -1.181_274_570_487_020_144_6e-9,
    1.043_426_711_691_100_510_5e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708_2e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783_2e-14,
    -5.348_122_539_423_017_982_4e-15,
    1.226_778_628_238_260_790_2e-15,
    -1.181_259_301_697_458_769_5e-16,
    1.186_692_254_751_600_332_6e-18,
    1.412_380_655_318_031_781_6e-18,
    -2.298_745_684_435_370_206_6e-19,
];

fn check_args(v: f64, z: Complex64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::Domain(format!("Bessel order must be finite, got {v}")));
    }
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("Bessel argument must be finite, got {z}")));
    }
    if !(z.re > 0.0) {
        return Err(Error::Domain(format!(
            "K_v(z) is evaluated only for Re(z) > 0, got z = {z}"
        )));
    }
    Ok(())
}

/// `K_v(z)`. Fails with [`Error::Underflow`] when `Re(z)` is too large for
/// an unscaled double; [`bessel_k_scaled`] covers that range.
pub fn bessel_k(v: f64, z: Complex64) -> Result<Complex64> {
    check_args(v, z)?;
    if z.re > UNDERFLOW_RE {
        return Err(Error::Underflow { order: v, re: z.re });
    }
    Ok(scaled_single(v.abs(), z) * (-z).exp())
}

/// `e^z K_v(z)`.
pub fn bessel_k_scaled(v: f64, z: Complex64) -> Result<Complex64> {
    check_args(v, z)?;
    Ok(scaled_single(v.abs(), z))
}

/// `(e^z K_v(z), e^z K_{v+1}(z))`.
pub fn bessel_k_pair_scaled(v: f64, z: Complex64) -> Result<(Complex64, Complex64)> {
    check_args(v, z)?;
    if v >= 0.0 {
        Ok(scaled_pair(v, z))
    } else {
        Ok((scaled_single(-v, z), scaled_single((v + 1.0).abs(), z)))
    }
}

/// `K'_v(z) = (v/z) K_v(z) - K_{v+1}(z)`.
pub fn bessel_k_prime(v: f64, z: Complex64) -> Result<Complex64> {
    check_args(v, z)?;
    if z.re > UNDERFLOW_RE {
        return Err(Error::Underflow { order: v, re: z.re });
    }
    let (kv, kv1) = bessel_k_pair_scaled(v, z)?;
    Ok((kv * v / z - kv1) * (-z).exp())
}

fn scaled_single(nu: f64, z: Complex64) -> Complex64 {
    scaled_pair(nu, z).0
}

fn is_half_integer(nu: f64) -> bool {
    nu >= 0.5 && (nu - 0.5).fract() == 0.0 && nu < 1e6
}

fn scaled_pair(nu: f64, z: Complex64) -> (Complex64, Complex64) {
    debug_assert!(nu >= 0.0);
    if is_half_integer(nu) {
        let n = (nu - 0.5) as usize;
        return (half_integer_scaled(n, z), half_integer_scaled(n + 1, z));
    }
    if z.norm() >= ASYMPTOTIC_RADIUS {
        if let (Some(a), Some(b)) = (asymptotic_scaled(nu, z), asymptotic_scaled(nu + 1.0, z)) {
            return (a, b);
        }
    }
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut k_lo, mut k_hi) = if z.norm() <= SERIES_RADIUS {
        let (a, b) = temme_series(mu, z);
        let s = z.exp();
        (a * s, b * s)
    } else {
        steed_cf2(mu, z)
    };
    let inv_z = z.inv();
    let mut order = mu + 1.0;
    for _ in 0..nl as usize {
        let next = k_lo + k_hi * (2.0 * order) * inv_z;
        k_lo = k_hi;
        k_hi = next;
        order += 1.0;
    }
    (k_lo, k_hi)
}

/// `e^z K_{n+1/2}(z) = sqrt(pi/2z) sum_k (n+k)! / (k! (n-k)!) (2z)^{-k}`.
fn half_integer_scaled(n: usize, z: Complex64) -> Complex64 {
    let inv_2z = (2.0 * z).inv();
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..=n {
        // (n+k)!/(k!(n-k)!) = previous * (n+k)(n-k+1)/k
        let ratio = ((n + k) * (n - k + 1)) as f64 / k as f64;
        term = term * ratio * inv_2z;
        sum += term;
    }
    (PI / (2.0 * z)).sqrt() * sum
}

/// Large-|z| expansion `sqrt(pi/2z) sum_k a_k(nu) z^{-k}`. Returns `None`
/// when the terms start growing before reaching machine precision.
fn asymptotic_scaled(nu: f64, z: Complex64) -> Option<Complex64> {
    let four_nu2 = 4.0 * nu * nu;
    let inv_8z = (8.0 * z).inv();
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term = term * ((four_nu2 - odd * odd) / k as f64) * inv_8z;
        let size = term.norm();
        if size == 0.0 || size < EPS * 0.1 * sum.norm() {
            return Some((PI / (2.0 * z)).sqrt() * sum);
        }
        if size > last {
            return None;
        }
        last = size;
        sum += term;
    }
    None
}

/// `(1/Gamma(1+mu), 1/Gamma(1-mu), gam1, gam2)` as used by Temme's series.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mut plus = 0.0;
    let mut minus = 0.0;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pw = 1.0;
    for (j, &c) in RECIP_GAMMA.iter().enumerate() {
        let t = c * pw;
        plus += t;
        if j % 2 == 0 {
            minus += t;
            gam2 += t;
        } else {
            minus -= t;
        }
        pw *= mu;
    }
    // gam1 = -(sum over odd j of c_j mu^{j-1})
    let mut pw = 1.0;
    for j in (1..RECIP_GAMMA.len()).step_by(2) {
        gam1 -= RECIP_GAMMA[j] * pw;
        pw *= mu * mu;
    }
    (plus, minus, gam1, gam2)
}

/// Unscaled `(K_mu(z), K_{mu+1}(z))` for `|mu| <= 1/2`, small `|z|`.
fn temme_series(mu: f64, z: Complex64) -> (Complex64, Complex64) {
    let x2 = z * 0.5;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = d * mu;
    let fact2 = if e.norm() < EPS {
        Complex64::new(1.0, 0.0)
    } else {
        e.sinh() / e
    };
    let (gampl, gammi, gam1, gam2) = temme_gammas(mu);
    let mut ff = (e.cosh() * gam1 + fact2 * d * gam2) * fact;
    let mut sum = ff;
    let ee = e.exp();
    let mut p = ee * (0.5 / gampl);
    let mut q = ee.inv() * (0.5 / gammi);
    let mut c = Complex64::new(1.0, 0.0);
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (ff * fi + p + q) / (fi * fi - mu2);
        c = c * dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - ff * fi);
        sum1 += del1;
        if del.norm() < sum.norm() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / z)
}

/// Scaled `(e^z K_mu(z), e^z K_{mu+1}(z))` by Steed's algorithm for CF2.
fn steed_cf2(mu: f64, z: Complex64) -> (Complex64, Complex64) {
    let one = Complex64::new(1.0, 0.0);
    let mut b = (z + 1.0) * 2.0;
    let mut d = b.inv();
    let mut h = d;
    let mut delh = d;
    let mut q1 = Complex64::new(0.0, 0.0);
    let mut q2 = one;
    let a1 = 0.25 - mu * mu;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = a1;
    let mut a = -a1;
    let mut s = one + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += qnew * c;
        b += 2.0;
        d = (b + d * a).inv();
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).norm() < EPS {
            break;
        }
    }
    let h = h * a1;
    let kmu = (PI / (2.0 * z)).sqrt() / s;
    let kmu1 = kmu * (z + mu + 0.5 - h) / z;
    (kmu, kmu1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    /// `int_0^inf exp(-z cosh t) cosh(v t) dt` by composite Simpson; an
    /// independent route valid for `Re z > 0`.
    fn cosh_integral(v: f64, z: Complex64) -> Complex64 {
        let upper = {
            // decay exp(-Re z cosh t) below 1e-30 of exp(-Re z)
            let mut t = 1.0;
            while z.re * (t as f64).cosh() - v * t - z.re < 75.0 {
                t += 0.5;
            }
            t
        };
        let n = 200_000;
        let h = upper / n as f64;
        let f = |t: f64| (-z * t.cosh() + z).exp() * (v * t).cosh();
        let mut sum = f(0.0) + f(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += f(i as f64 * h) * w;
        }
        sum * h / 3.0
    }

    #[test]
    fn half_integer_closed_form() {
        let k = bessel_k(0.5, c(1.0, 0.0)).unwrap();
        let expect = (PI / 2.0).sqrt() * (-1.0_f64).exp();
        assert!((k.re - expect).abs() < 1e-15);
        assert!((k.re - 0.461_068_504_447_894_4).abs() < 1e-12);
        // K_{3/2}(z) = sqrt(pi/2z) e^{-z} (1 + 1/z)
        let z = c(2.0, 1.0);
        let k = bessel_k(1.5, z).unwrap();
        let expect = (PI / (2.0 * z)).sqrt() * (-z).exp() * (1.0 + z.inv());
        assert!(rel(k, expect) < 1e-14);
    }

    #[test]
    fn symmetric_in_order() {
        let z = c(1.3, 0.4);
        let a = bessel_k(-0.5, z).unwrap();
        let b = bessel_k(0.5, z).unwrap();
        assert!(rel(a, b) < 1e-15);
        let a = bessel_k(-1.3, z).unwrap();
        let b = bessel_k(1.3, z).unwrap();
        assert!(rel(a, b) < 1e-15);
    }

    #[test]
    fn known_real_values() {
        // A&S table values
        let k0 = bessel_k(0.0, c(1.0, 0.0)).unwrap().re;
        assert!((k0 - 0.421_024_438_240_708_3).abs() < 1e-14);
        let k1 = bessel_k(1.0, c(1.0, 0.0)).unwrap().re;
        assert!((k1 - 0.601_907_230_197_234_6).abs() < 1e-14);
        let k0 = bessel_k(0.0, c(5.0, 0.0)).unwrap().re;
        assert!((k0 - 3.691_098_334_042_594e-3).abs() / k0 < 1e-13);
    }

    #[test]
    fn matches_cosh_integral_real_and_complex() {
        for &v in &[0.0, 0.3, 1.0, 2.0, 2.7, 4.2, 5.0] {
            for &z in &[
                c(0.1, 0.0),
                c(0.7, 0.0),
                c(1.9, 0.0),
                c(2.1, 0.0),
                c(6.0, 0.0),
                c(14.0, 0.0),
                c(16.0, 0.0),
                c(40.0, 0.0),
                c(1.0, 1.0),
                c(0.5, 1.4),
                c(1.5, 3.0),
                c(3.0, -4.0),
                c(10.0, 6.0),
                c(12.0, 9.0),
            ] {
                let got = bessel_k_scaled(v, z).unwrap();
                let want = cosh_integral(v, z);
                assert!(rel(got, want) < 1e-10, "v={v} z={z} got={got} want={want}");
            }
        }
    }

    #[test]
    fn path_seams_agree() {
        for &v in &[0.0, 0.25, 1.0, 3.3, 5.0] {
            for &phase in &[0.0, 0.6, 1.2] {
                let dir = Complex64::from_polar(1.0, phase);
                let pairs = [(SERIES_RADIUS, 1e-11), (ASYMPTOTIC_RADIUS, 1e-9)];
                for &(radius, tol) in &pairs {
                    let below = dir * (radius * (1.0 - 1e-12));
                    let above = dir * (radius * (1.0 + 1e-12));
                    let a = bessel_k_scaled(v, below).unwrap();
                    let b = bessel_k_scaled(v, above).unwrap();
                    assert!(rel(a, b) < tol, "v={v} phase={phase} r={radius}");
                }
            }
        }
    }

    #[test]
    fn near_imaginary_axis_large_modulus() {
        // large |z| close to the imaginary axis, where inversion contours go
        for &v in &[0.0, 1.0, 2.5] {
            let z = Complex64::from_polar(60.0, 1.45);
            let got = bessel_k_scaled(v, z).unwrap();
            let want = cosh_integral(v, z);
            assert!(rel(got, want) < 1e-9, "v={v} got={got} want={want}");
        }
    }

    #[test]
    fn rejects_left_half_plane() {
        assert!(bessel_k(1.0, c(0.0, 1.0)).is_err());
        assert!(bessel_k(1.0, c(-1.0, 0.0)).is_err());
        assert!(matches!(
            bessel_k(0.0, c(800.0, 0.0)),
            Err(Error::Underflow { .. })
        ));
        assert!(bessel_k_scaled(0.0, c(800.0, 0.0)).is_ok());
    }

    #[test]
    fn derivative_of_half_integer_closed_form() {
        // d/dz sqrt(pi/2z) e^{-z} = -sqrt(pi/2z) e^{-z} (1 + 1/(2z))
        let z = c(1.0, 0.0);
        let kp = bessel_k_prime(0.5, z).unwrap();
        let expect = -(PI / 2.0).sqrt() * (-1.0_f64).exp() * 1.5;
        assert!(((kp.re - expect) / expect).abs() < 1e-10);
    }

    #[test]
    fn recurrence_identity() {
        for &v in &[0.5, 1.0, 1.7, 3.0] {
            for &x in &[0.5, 2.0, 7.0, 20.0] {
                let z = c(x, 0.0);
                let lhs = bessel_k(v + 1.0, z).unwrap();
                let rhs = bessel_k(v - 1.0, z).unwrap() + bessel_k(v, z).unwrap() * (2.0 * v / x);
                assert!(rel(lhs, rhs) < 1e-8, "v={v} x={x}");
            }
        }
    }

    /// Leading-order remainder stays under the loose bound
    /// `2 |(4v^2 - 5)/z| exp(|(v^2 - 1/4)/z|)`.
    #[test]
    fn leading_remainder_under_loose_bound() {
        for &v in &[0.0, 0.25, 1.0, 2.0, 3.0] {
            for &z in &[c(2.0, 0.0), c(5.0, 3.0), c(1.0, 8.0), c(20.0, -4.0), c(40.0, 0.0)] {
                let r1 = (bessel_k_scaled(v, z).unwrap() * (2.0 * z / PI).sqrt() - 1.0).norm();
                let bound = 2.0 * ((4.0 * v * v - 5.0) / z).norm() * ((v * v - 0.25) / z).norm().exp();
                assert!(r1 <= bound, "v={v} z={z}: {r1} > {bound}");
            }
        }
    }
}
