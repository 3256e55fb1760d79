//! Macroscopic reference profiles: the radial hitting profile `phi`, its
//! heat equation, the height function `N` and its transport-type equation,
//! plus finite-difference residual diagnostics.
//!
//! Radial equations on `r >= 1`:
//!
//! ```text
//! phi_tau = phi_rr / 2 + (d - 1)/(2 r) phi_r,   phi(1, tau) = alpha
//! N_tau   = N_rr / 2   - (d - 1)/(2 r) N_r,     N_r(1, tau) = -C_d alpha
//! ```
//!
//! with `C_d` the unit-sphere area (`C_1 = 1`, the half-line convention) and
//! zero initial data.

use log::warn;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hitting::{hitting_cdf, HittingSpec};
use crate::quadrature::integrate;
use crate::specfun::unit_sphere_area;

/// `alpha P(tau_{chi,1} <= tau)`.
pub fn phi(chi_norm: f64, tau: f64, alpha: f64, d: usize) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(alpha * hitting_cdf(&HittingSpec::new(d, chi_norm, tau)?)?)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Angular prefactor of the height function: the unit-sphere area for
/// `d >= 2` and 1 for the one-sided line.
pub fn height_prefactor(d: usize) -> f64 {
    if d == 1 {
        1.0
    } else {
        unit_sphere_area(d)
    }
}

/// Grid and step settings for the Crank–Nicolson solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CnSettings {
    pub r_max: f64,
    pub dr: f64,
    pub dtau: f64,
    pub tau_end: f64,
    /// Leading backward-Euler half steps that damp the start-up discontinuity.
    pub startup_half_steps: usize,
}

impl CnSettings {
    pub const DEFAULT_DR: f64 = 0.01;
    pub const DEFAULT_DTAU: f64 = 0.001;
    pub const DEFAULT_STARTUP: usize = 4;

    /// Default grid reaching `1 + 12 sqrt(tau_end)`.
    pub fn for_horizon(tau_end: f64) -> Self {
        Self {
            r_max: default_r_max(tau_end),
            dr: Self::DEFAULT_DR,
            dtau: Self::DEFAULT_DTAU,
            tau_end,
            startup_half_steps: Self::DEFAULT_STARTUP,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dr > 0.0) || !(self.dtau > 0.0) {
            return Err(invalid("dr and dtau must be positive"));
        }
        if !(self.tau_end >= 0.0) || !self.tau_end.is_finite() {
            return Err(invalid(format!("tau_end must be >= 0, got {}", self.tau_end)));
        }
        if !(self.r_max >= 1.0 + 4.0 * self.dr) {
            return Err(invalid(format!("r_max = {} leaves no interior grid", self.r_max)));
        }
        if self.r_max < 1.0 + self.tau_end.sqrt() {
            warn!("r_max = {} is within the diffusive reach of tau_end = {}", self.r_max, self.tau_end);
        }
        if self.dtau > 10.0 * self.dr {
            warn!("dtau = {} exceeds 10 dr; expect time-stepping error", self.dtau);
        }
        Ok(())
    }
}

/// Far-field radius at which the Gaussian tail is negligible.
pub fn default_r_max(tau_end: f64) -> f64 {
    1.0 + 12.0 * tau_end.max(1e-2).sqrt()
}

/// Values of a radial profile on `r_grid` (first node at 1) at time `tau`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialField {
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub tau: f64,
    pub d: usize,
    pub alpha: f64,
}

impl RadialField {
    /// Linear interpolation; 0 beyond the grid.
    pub fn value_at(&self, r: f64) -> f64 {
        let h = self.r_grid[1] - self.r_grid[0];
        let x = (r - self.r_grid[0]) / h;
        if x < 0.0 {
            return self.values[0];
        }
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return 0.0;
        }
        let w = x - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// Solves `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = rhs_i` (Thomas algorithm).
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = b.len();
    scratch[0] = c[0] / b[0];
    rhs[0] /= b[0];
    for i in 1..n {
        let denom = b[i] - a[i] * scratch[i - 1];
        scratch[i] = c[i] / denom;
        rhs[i] = (rhs[i] - a[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

#[derive(Clone, Copy, PartialEq)]
enum InnerCondition {
    /// Fixed value at r = 1.
    Dirichlet(f64),
    /// Fixed outward-normal slope at r = 1 (ghost node).
    Neumann(f64),
}

/// Operator `u_rr/2 + drift(r) u_r` on the unknown nodes, split into the
/// tridiagonal part and a constant source from the boundary condition.
struct RadialOperator {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
    source: Vec<f64>,
    first_node: usize,
}

impl RadialOperator {
    fn new(r: &[f64], dr: f64, drift_sign: f64, d: usize, inner: InnerCondition) -> Self {
        let k = (d as f64 - 1.0) / 2.0 * drift_sign;
        let last = r.len() - 1;
        let first_node = match inner {
            InnerCondition::Dirichlet(_) => 1,
            InnerCondition::Neumann(_) => 0,
        };
        let n = last - first_node;
        let (mut lo, mut di, mut up, mut source) =
            (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for (j, i) in (first_node..last).enumerate() {
            let drift = k / r[i];
            lo[j] = 0.5 / (dr * dr) - drift / (2.0 * dr);
            di[j] = -1.0 / (dr * dr);
            up[j] = 0.5 / (dr * dr) + drift / (2.0 * dr);
        }
        match inner {
            InnerCondition::Dirichlet(v) => {
                source[0] = lo[0] * v;
                lo[0] = 0.0;
            }
            InnerCondition::Neumann(g) => {
                // ghost value u_{-1} = u_1 - 2 dr g
                up[0] += lo[0];
                source[0] = -lo[0] * 2.0 * dr * g;
                lo[0] = 0.0;
            }
        }
        Self { lo, di, up, source, first_node }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for j in 0..n {
            let left = if j > 0 { self.lo[j] * u[j - 1] } else { 0.0 };
            let right = if j + 1 < n { self.up[j] * u[j + 1] } else { 0.0 };
            out[j] = left + self.di[j] * u[j] + right + self.source[j];
        }
    }

    /// One theta-step `(I - theta h A) u' = (I + (1 - theta) h A) u + h S`.
    fn step(&self, u: &mut [f64], h: f64, theta: f64, work: &mut Work) {
        let n = u.len();
        self.apply(u, &mut work.au);
        for j in 0..n {
            work.rhs[j] = u[j] + (1.0 - theta) * h * (work.au[j] - self.source[j]) + h * self.source[j];
            work.a[j] = -theta * h * self.lo[j];
            work.b[j] = 1.0 - theta * h * self.di[j];
            work.c[j] = -theta * h * self.up[j];
        }
        solve_tridiagonal(&work.a, &work.b, &work.c, &mut work.rhs, &mut work.scratch);
        u.copy_from_slice(&work.rhs);
    }
}

struct Work {
    au: Vec<f64>,
    rhs: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    scratch: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self {
            au: vec![0.0; n],
            rhs: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }
}

fn solve_radial(
    d: usize,
    alpha: f64,
    settings: &CnSettings,
    taus: &[f64],
    drift_sign: f64,
    inner: InnerCondition,
) -> Result<Vec<RadialField>> {
    if d == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    check_alpha(alpha)?;
    settings.validate()?;
    let dr = settings.dr;
    let nodes = ((settings.r_max - 1.0) / dr).round() as usize + 1;
    let r: Vec<f64> = (0..nodes).map(|i| 1.0 + i as f64 * dr).collect();
    let op = RadialOperator::new(&r, dr, drift_sign, d, inner);
    let mut u = vec![0.0; op.lo.len()];
    let mut work = Work::new(u.len());

    let mut targets: Vec<(usize, usize)> = taus
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            if !(t >= 0.0) || t > settings.tau_end + 1e-12 {
                Err(invalid(format!("snapshot time {t} outside [0, tau_end]")))
            } else {
                Ok(((t / settings.dtau).round() as usize, k))
            }
        })
        .collect::<Result<_>>()?;
    targets.sort();
    let total_steps = (settings.tau_end / settings.dtau).round() as usize;

    let field = |u: &[f64], step: usize| {
        let mut values = vec![0.0; nodes];
        values[op.first_node..nodes - 1].copy_from_slice(u);
        if let InnerCondition::Dirichlet(v) = inner {
            values[0] = if step == 0 { 0.0 } else { v };
        }
        RadialField { r_grid: r.clone(), values, tau: step as f64 * settings.dtau, d, alpha }
    };

    let mut out: Vec<Option<RadialField>> = vec![None; taus.len()];
    let mut next = 0;
    let startup = settings.startup_half_steps.div_ceil(2) * 2;
    for step in 0..=total_steps {
        while next < targets.len() && targets[next].0 == step {
            out[targets[next].1] = Some(field(&u, step));
            next += 1;
        }
        if step == total_steps {
            break;
        }
        if step * 2 < startup {
            op.step(&mut u, settings.dtau / 2.0, 1.0, &mut work);
            op.step(&mut u, settings.dtau / 2.0, 1.0, &mut work);
        } else {
            op.step(&mut u, settings.dtau, 0.5, &mut work);
        }
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("solver produced non-finite values".into()));
    }
    Ok(out.into_iter().map(|f| f.expect("every snapshot step is reached")).collect())
}

/// Radial heat equation for `phi` with Dirichlet value `alpha` at `r = 1`
/// and zero far field; profile at `settings.tau_end`.
pub fn solve_radial_heat(d: usize, alpha: f64, settings: &CnSettings) -> Result<RadialField> {
    Ok(solve_radial_heat_series(d, alpha, settings, &[settings.tau_end])?.remove(0))
}

/// As [`solve_radial_heat`], returning profiles at each of `taus`
/// (rounded to the time grid).
pub fn solve_radial_heat_series(d: usize, alpha: f64, settings: &CnSettings, taus: &[f64]) -> Result<Vec<RadialField>> {
    solve_radial(d, alpha, settings, taus, 1.0, InnerCondition::Dirichlet(alpha))
}

/// Height-function equation with slope `-C_d alpha` at `r = 1` and zero far field.
pub fn solve_height_pde(d: usize, alpha: f64, settings: &CnSettings) -> Result<RadialField> {
    Ok(solve_height_pde_series(d, alpha, settings, &[settings.tau_end])?.remove(0))
}

pub fn solve_height_pde_series(d: usize, alpha: f64, settings: &CnSettings, taus: &[f64]) -> Result<Vec<RadialField>> {
    let slope = -height_prefactor(d) * alpha;
    solve_radial(d, alpha, settings, taus, -1.0, InnerCondition::Neumann(slope))
}

/// Absolute cutoff for the last tail panel of [`big_n`].
pub const TAIL_PANEL_CUTOFF: f64 = 1e-12;

/// `C_d alpha int_r^inf w^{d-1} P(tau_{w,1} <= tau) dw`, integrated over
/// doubling panels until a panel with a decreasing integrand contributes
/// less than [`TAIL_PANEL_CUTOFF`].
pub fn big_n(r: f64, tau: f64, d: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    HittingSpec::new(d.max(1), r, tau)?;
    if tau == 0.0 || alpha == 0.0 {
        return Ok(0.0);
    }
    let power = d as i32 - 1;
    let integrand = |w: f64| -> Result<f64> { Ok(w.powi(power) * hitting_cdf(&HittingSpec::new(d, w, tau)?)?) };
    let mut total = 0.0;
    let mut a = r;
    let mut width = 0.5 * tau.sqrt().max(0.05);
    for _ in 0..64 {
        let b = a + width;
        let part = integrate(integrand, a, b, 1e-11, 1e-10)?;
        total += part;
        if part.abs() < TAIL_PANEL_CUTOFF && integrand(b)? <= integrand(a)? {
            return Ok(height_prefactor(d) * alpha * total);
        }
        a = b;
        width *= 2.0;
    }
    Err(Error::QuadratureNotConverged { tolerance: TAIL_PANEL_CUTOFF, estimate: total })
}

/// Sampling grid for [`pde_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub r_points: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    /// Finite-difference step.
    pub h: f64,
}

impl Default for ResidualGrid {
    fn default() -> Self {
        Self { r_min: 1.2, r_max: 4.0, r_points: 15, tau_min: 0.2, tau_max: 2.0, tau_points: 10, h: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub max_abs: f64,
    pub at_r: f64,
    pub at_tau: f64,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Largest `|phi_tau - phi_rr/2 - (d-1)/(2r) phi_r|` over the grid, with
/// central differences of [`phi`].
pub fn pde_residual(d: usize, alpha: f64, grid: &ResidualGrid) -> Result<Residual> {
    let h = grid.h;
    if !(h > 0.0) || grid.r_min - h < 1.0 || grid.tau_min - h <= 0.0 {
        return Err(invalid("residual grid must stay inside r > 1, tau > 0"));
    }
    let mut worst = Residual { max_abs: 0.0, at_r: grid.r_min, at_tau: grid.tau_min };
    let k = (d as f64 - 1.0) / 2.0;
    for &r in &linspace(grid.r_min, grid.r_max, grid.r_points) {
        for &tau in &linspace(grid.tau_min, grid.tau_max, grid.tau_points) {
            let f = |rr: f64, tt: f64| phi(rr, tt, alpha, d);
            let c = f(r, tau)?;
            let (rp, rm) = (f(r + h, tau)?, f(r - h, tau)?);
            let (tp, tm) = (f(r, tau + h)?, f(r, tau - h)?);
            let dt = (tp - tm) / (2.0 * h);
            let drr = (rp - 2.0 * c + rm) / (h * h);
            let dr1 = (rp - rm) / (2.0 * h);
            let res = (dt - 0.5 * drr - k / r * dr1).abs();
            if res > worst.max_abs {
                worst = Residual { max_abs: res, at_r: r, at_tau: tau };
            }
        }
    }
    Ok(worst)
}

/// One-sided second-order estimate of `dN/dr` at `r = 1`.
pub fn height_slope_at_unit_radius(tau: f64, d: usize, alpha: f64, h: f64) -> Result<f64> {
    let n0 = big_n(1.0, tau, d, alpha)?;
    let n1 = big_n(1.0 + h, tau, d, alpha)?;
    let n2 = big_n(1.0 + 2.0 * h, tau, d, alpha)?;
    Ok((-3.0 * n0 + 4.0 * n1 - n2) / (2.0 * h))
}
