//! Fitting the process-time scale and the height normalization, and the
//! convergence-in-L table.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::hydro::phi;

/// One binned profile point: radial position in macroscopic units, Monte
/// Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub chi: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Misfit of a candidate time scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleSample {
    pub scale: f64,
    /// Mean squared gap between the profile and `phi`.
    pub objective: f64,
    /// Mean squared standard error over the same points: the part of the
    /// objective expected from sampling noise alone.
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleFit {
    /// Parabolic refinement around the best candidate.
    pub scale: f64,
    /// Best simulated candidate.
    pub best_candidate: f64,
    pub objective: f64,
}

/// Squared-gap objective of profiles against `phi` over bins with
/// `chi_min <= chi <= chi_max`. Each element of `profiles` is a `(tau,
/// points)` pair.
pub fn scale_objective(
    scale: f64,
    profiles: &[(f64, Vec<ProfilePoint>)],
    d: usize,
    alpha: f64,
    chi_min: f64,
    chi_max: f64,
) -> Result<ScaleSample> {
    let (mut sq, mut noise, mut n) = (0.0, 0.0, 0usize);
    for (tau, points) in profiles {
        for p in points.iter().filter(|p| p.chi >= chi_min && p.chi <= chi_max) {
            let gap = p.mean - phi(p.chi, *tau, alpha, d)?;
            sq += gap * gap;
            noise += p.stderr * p.stderr;
            n += 1;
        }
    }
    if n == 0 {
        return Err(invalid("no profile bins inside the comparison window"));
    }
    Ok(ScaleSample { scale, objective: sq / n as f64, noise: noise / n as f64 })
}

/// Picks the candidate scale with the smallest objective and refines it
/// with a parabola through its neighbours. Fails with `NonIdentifiable`
/// when the objective varies by no more than its noise level.
pub fn fit_time_scale(samples: &[ScaleSample]) -> Result<ScaleFit> {
    if samples.len() < 2 {
        return Err(invalid("need at least two candidate scales"));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.scale.total_cmp(&b.scale));
    if s.windows(2).any(|w| w[1].scale <= w[0].scale) {
        return Err(invalid("candidate scales must be distinct"));
    }
    let max = s.iter().map(|x| x.objective).fold(f64::MIN, f64::max);
    let min = s.iter().map(|x| x.objective).fold(f64::MAX, f64::min);
    let noise = s.iter().map(|x| x.noise).fold(0.0, f64::max);
    let spread = max - min;
    if spread <= noise || spread <= f64::EPSILON * max.abs() {
        return Err(Error::NonIdentifiable { spread, noise });
    }
    let i = (0..s.len())
        .min_by(|&a, &b| s[a].objective.total_cmp(&s[b].objective))
        .expect("non-empty");
    let best = s[i];
    if i == 0 || i + 1 == s.len() {
        log::warn!("best time scale {} lies at the edge of the candidate range", best.scale);
        return Ok(ScaleFit { scale: best.scale, best_candidate: best.scale, objective: best.objective });
    }
    let (x0, x1, x2) = (s[i - 1].scale, s[i].scale, s[i + 1].scale);
    let (y0, y1, y2) = (s[i - 1].objective, s[i].objective, s[i + 1].objective);
    let num = (x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0);
    let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    let vertex = if den != 0.0 { x1 - 0.5 * num / den } else { x1 };
    Ok(ScaleFit {
        scale: vertex.clamp(x0, x2),
        best_candidate: best.scale,
        objective: best.objective,
    })
}

/// Least-squares factor `c` minimising `sum (c * measured - reference)^2`.
pub fn fit_normalization(measured: &[f64], reference: &[f64]) -> Result<f64> {
    if measured.len() != reference.len() || measured.is_empty() {
        return Err(invalid("normalization needs matching non-empty series"));
    }
    let num: f64 = measured.iter().zip(reference).map(|(a, b)| a * b).sum();
    let den: f64 = measured.iter().map(|a| a * a).sum();
    if den == 0.0 {
        return Err(Error::NonIdentifiable { spread: 0.0, noise: 0.0 });
    }
    Ok(num / den)
}

/// Largest gap for one system size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapAtSize {
    pub l: u64,
    pub max_gap: f64,
    /// Standard error of the bin attaining `max_gap`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<GapAtSize>,
    /// Consecutive sizes where the gap grew but stayed within three combined standard errors.
    pub tolerated_increases: usize,
    /// Consecutive sizes where the gap grew by more than that.
    pub significant_increases: usize,
    /// No significant increase and at most one tolerated one.
    pub decreasing: bool,
}

/// Convergence-in-L summary; needs at least three sizes.
pub fn convergence_table(rows: &[GapAtSize]) -> Result<ConvergenceTable> {
    if rows.len() < 3 {
        return Err(invalid("a convergence study needs at least three values of L"));
    }
    let (mut tolerated, mut significant) = (0, 0);
    for w in rows.windows(2) {
        let grow = w[1].max_gap - w[0].max_gap;
        if grow > 0.0 {
            if grow <= 3.0 * w[0].stderr.hypot(w[1].stderr) {
                tolerated += 1;
            } else {
                significant += 1;
            }
        }
    }
    Ok(ConvergenceTable {
        rows: rows.to_vec(),
        tolerated_increases: tolerated,
        significant_increases: significant,
        decreasing: significant == 0 && tolerated <= 1,
    })
}
