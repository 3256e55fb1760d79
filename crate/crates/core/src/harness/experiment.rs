//! Replica scheduling and the microscopic-versus-macroscopic comparison.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{workers_from_env, ExperimentConfig};
use super::fit::{
    convergence_table, fit_normalization, fit_time_scale, scale_objective, ConvergenceTable, GapAtSize,
    ProfilePoint, ScaleFit, ScaleSample,
};
use crate::domain::{DomainSpec, OuterMode};
use crate::duality::dual_absorption_prob;
use crate::error::{invalid, Error, Result};
use crate::hydro::{big_n, phi};
use crate::sep_process::{
    map_time, replica_rng, DensityAccumulator, ProcessParams, RadialBins, Simulator,
};

/// Runs `f` on a thread pool sized by the worker environment variable (or
/// rayon's default).
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers_from_env() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Scalar mean and standard error accumulated over replicas.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - n * self.mean() * self.mean()) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Binned profile and height values of one system size at one `(scale, tau)`.
#[derive(Debug, Clone)]
struct SnapshotStats {
    scale: f64,
    tau: f64,
    time: f64,
    profile: Vec<ProfilePoint>,
    sites: Vec<u64>,
    heights: Vec<Moments>,
}

struct SizeRun {
    l: u64,
    sqrt_l: f64,
    r_out: f64,
    snapshots: Vec<SnapshotStats>,
}

fn run_size(config: &ExperimentConfig, l: u64) -> Result<SizeRun> {
    let sqrt_l = (l as f64).sqrt();
    let r_out = config.r_out_factor * sqrt_l;
    let domain = DomainSpec::build(config.d, sqrt_l, r_out, config.outer_mode)?;
    let params = ProcessParams::new(config.m, config.alpha)?;
    let bins = RadialBins::new(&domain, config.bin_width)?;

    // (scale, tau, process time), visited in time order by each replica
    let mut plan: Vec<(f64, f64, f64)> = Vec::new();
    for &scale in &config.snapshot_scales() {
        for &tau in &config.taus {
            plan.push((scale, tau, map_time(tau, l as f64, config.d, config.m, Some(scale))));
        }
    }
    let mut order: Vec<usize> = (0..plan.len()).collect();
    order.sort_by(|&a, &b| plan[a].2.total_cmp(&plan[b].2));

    let radii: Vec<f64> = config.checks.height_radii.iter().map(|r| r * sqrt_l).collect();
    let volume = sqrt_l.powi(config.d as i32);
    let m = config.m as f64;

    log::info!("L = {l}: {} replicas, {} cells, {} snapshots", config.replicas, domain.num_cells(), plan.len());
    let per_replica: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..config.replicas)
        .into_par_iter()
        .map(|rep| {
            let mut sim = Simulator::new(&domain, params, replica_rng(config.master_seed, rep as u64));
            let mut out = vec![(Vec::new(), Vec::new()); plan.len()];
            for &k in &order {
                sim.advance_to(plan[k].2);
                let cfg = sim.config();
                let means = bins.bin_means(&domain, &params, cfg);
                let mut counts = vec![0u64; radii.len()];
                for &s in cfg.particle_sites() {
                    let norm = domain.norm(s as usize);
                    for (c, &r) in counts.iter_mut().zip(&radii) {
                        if norm >= r {
                            *c += 1;
                        }
                    }
                }
                let heights = counts.iter().map(|&c| c as f64 / m / volume).collect();
                out[k] = (means, heights);
            }
            out
        })
        .collect();

    let mut snapshots = Vec::with_capacity(plan.len());
    for (k, &(scale, tau, time)) in plan.iter().enumerate() {
        let mut acc = DensityAccumulator::new(bins.len());
        let mut heights = vec![Moments::default(); radii.len()];
        for rep in &per_replica {
            acc.push(&rep[k].0);
            for (h, &v) in heights.iter_mut().zip(&rep[k].1) {
                h.push(v);
            }
        }
        let est = acc.finish(&bins, time)?;
        snapshots.push(SnapshotStats {
            scale,
            tau,
            time,
            profile: est
                .bins
                .iter()
                .map(|b| ProfilePoint { chi: b.radial_midpoint / sqrt_l, mean: b.mean, stderr: b.stderr })
                .collect(),
            sites: est.bins.iter().map(|b| b.sites).collect(),
            heights,
        });
    }
    Ok(SizeRun { l, sqrt_l, r_out, snapshots })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparedBin {
    pub chi: f64,
    pub mean: f64,
    pub stderr: f64,
    pub sites: u64,
    pub phi: f64,
    pub gap: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeightPoint {
    pub r: f64,
    /// `(1/m) E[N] / L^{d/2}`.
    pub mean: f64,
    pub stderr: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauReport {
    pub tau: f64,
    pub process_time: f64,
    pub bins: Vec<ComparedBin>,
    /// Largest `|gap|` over bins inside the comparison window.
    pub max_gap: f64,
    pub max_gap_stderr: f64,
    pub max_gap_chi: f64,
    pub height: Vec<HeightPoint>,
    /// Least-squares factor mapping `mean` onto `reference`, if defined.
    pub height_normalization: Option<f64>,
    /// Largest relative height gap after applying `height_normalization`.
    pub height_max_rel_gap: Option<f64>,
    /// Largest relative height gap with normalization 1.
    pub height_max_rel_gap_raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub l: u64,
    pub sqrt_l: f64,
    pub r_out: f64,
    pub scale_samples: Vec<ScaleSample>,
    pub scale_fit: Option<ScaleFit>,
    pub scale_fit_error: Option<String>,
    pub taus: Vec<TauReport>,
    pub max_gap: f64,
    pub max_gap_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub config: ExperimentConfig,
    /// `2 d m`.
    pub paper_time_scale: f64,
    /// `d m`, the per-coordinate-variance calibration.
    pub variance_time_scale: f64,
    /// Fit on the largest system size.
    pub fitted_time_scale: Option<f64>,
    /// Scale at which the reported profiles were taken.
    pub evaluation_time_scale: f64,
    /// Share of the height mass beyond the outer radius at the longest
    /// simulated Brownian time under the variance calibration.
    pub truncation_mass_fraction: f64,
    pub sizes: Vec<SizeReport>,
    pub convergence: Option<ConvergenceTable>,
    pub checks: Vec<CheckResult>,
}

impl ComparisonReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn samples_for(config: &ExperimentConfig, run: &SizeRun) -> Result<Vec<ScaleSample>> {
    let c = &config.checks;
    let mut scales: Vec<f64> = run.snapshots.iter().map(|s| s.scale).collect();
    scales.dedup();
    scales
        .iter()
        .map(|&scale| {
            let profiles: Vec<(f64, Vec<ProfilePoint>)> = run
                .snapshots
                .iter()
                .filter(|s| s.scale == scale)
                .map(|s| (s.tau, s.profile.clone()))
                .collect();
            scale_objective(scale, &profiles, config.d, config.alpha, c.chi_min, c.chi_max)
        })
        .collect()
}

fn tau_report(config: &ExperimentConfig, snap: &SnapshotStats) -> Result<TauReport> {
    let c = &config.checks;
    let bins = snap
        .profile
        .iter()
        .zip(&snap.sites)
        .map(|(p, &sites)| {
            let reference = phi(p.chi.max(1.0), snap.tau, config.alpha, config.d)?;
            let gap = p.mean - reference;
            let z = if gap == 0.0 { 0.0 } else { gap / p.stderr.max(1e-12) };
            Ok(ComparedBin { chi: p.chi, mean: p.mean, stderr: p.stderr, sites, phi: reference, gap, z })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = bins
        .iter()
        .filter(|b| b.chi >= c.chi_min && b.chi <= c.chi_max)
        .max_by(|a, b| a.gap.abs().total_cmp(&b.gap.abs()));
    let (max_gap, max_gap_stderr, max_gap_chi) = worst.map_or((0.0, 0.0, f64::NAN), |b| (b.gap.abs(), b.stderr, b.chi));

    let height = c
        .height_radii
        .iter()
        .zip(&snap.heights)
        .map(|(&r, h)| {
            Ok(HeightPoint { r, mean: h.mean(), stderr: h.stderr(), reference: big_n(r, snap.tau, config.d, config.alpha)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let measured: Vec<f64> = height.iter().map(|h| h.mean).collect();
    let reference: Vec<f64> = height.iter().map(|h| h.reference).collect();
    let rel = |c: f64| {
        height
            .iter()
            .filter(|h| h.reference > 0.0)
            .map(|h| (c * h.mean / h.reference - 1.0).abs())
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
    };
    let height_normalization = if height.is_empty() { None } else { fit_normalization(&measured, &reference).ok() };
    Ok(TauReport {
        tau: snap.tau,
        process_time: snap.time,
        bins,
        max_gap,
        max_gap_stderr,
        max_gap_chi,
        height_max_rel_gap: height_normalization.and_then(rel),
        height_max_rel_gap_raw: rel(1.0),
        height,
        height_normalization,
    })
}

fn truncation_fraction(config: &ExperimentConfig) -> Result<f64> {
    if config.alpha == 0.0 {
        return Ok(0.0);
    }
    let dm = config.d as f64 * config.m as f64;
    let max_scale = config.snapshot_scales().into_iter().fold(0.0, f64::max);
    let tau = config.taus.iter().copied().fold(0.0, f64::max) * max_scale / dm;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let total = big_n(1.0, tau, config.d, config.alpha)?;
    Ok(big_n(config.r_out_factor, tau, config.d, config.alpha)? / total)
}

/// Runs every system size, fits the time scale on the largest one, and
/// compares the profiles at that scale with `phi` and the height values
/// with `big_n`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let runs = with_workers(|| config.l_values.iter().map(|&l| run_size(config, l)).collect::<Result<Vec<_>>>())??;

    let mut samples = Vec::new();
    let mut fits = Vec::new();
    for run in &runs {
        let s = if config.fit_time_scale { samples_for(config, run)? } else { Vec::new() };
        let fit = if config.fit_time_scale { Some(fit_time_scale(&s)) } else { None };
        samples.push(s);
        fits.push(fit);
    }
    let largest_fit = fits.last().and_then(|f| f.as_ref()).and_then(|f| f.as_ref().ok()).copied();
    let evaluation = largest_fit.map_or(config.nominal_time_scale(), |f| f.best_candidate);

    let mut sizes = Vec::new();
    for ((run, s), fit) in runs.iter().zip(samples).zip(fits) {
        let taus = run
            .snapshots
            .iter()
            .filter(|sn| sn.scale == evaluation)
            .map(|sn| tau_report(config, sn))
            .collect::<Result<Vec<_>>>()?;
        let worst = taus.iter().max_by(|a, b| a.max_gap.total_cmp(&b.max_gap));
        let (max_gap, max_gap_stderr) = worst.map_or((0.0, 0.0), |t| (t.max_gap, t.max_gap_stderr));
        let (scale_fit, scale_fit_error) = match fit {
            Some(Ok(f)) => (Some(f), None),
            Some(Err(e)) => (None, Some(e.to_string())),
            None => (None, None),
        };
        sizes.push(SizeReport {
            l: run.l,
            sqrt_l: run.sqrt_l,
            r_out: run.r_out,
            scale_samples: s,
            scale_fit,
            scale_fit_error,
            taus,
            max_gap,
            max_gap_stderr,
        });
    }

    let rows: Vec<GapAtSize> =
        sizes.iter().map(|s| GapAtSize { l: s.l, max_gap: s.max_gap, stderr: s.max_gap_stderr }).collect();
    let convergence = if rows.len() >= 3 { Some(convergence_table(&rows)?) } else { None };
    let dm = config.d as f64 * config.m as f64;
    let mut report = ComparisonReport {
        config: config.clone(),
        paper_time_scale: 2.0 * dm,
        variance_time_scale: dm,
        fitted_time_scale: largest_fit.map(|f| f.scale),
        evaluation_time_scale: evaluation,
        truncation_mass_fraction: truncation_fraction(config)?,
        sizes,
        convergence,
        checks: Vec::new(),
    };
    report.checks = evaluate_checks(config, &report);
    Ok(report)
}

fn evaluate_checks(config: &ExperimentConfig, report: &ComparisonReport) -> Vec<CheckResult> {
    let c = &config.checks;
    let mut out = Vec::new();
    let last = report.sizes.last().expect("at least one size");
    out.push(CheckResult {
        name: "profile_gap".into(),
        passed: last.max_gap <= c.gap_tolerance,
        detail: format!(
            "L = {}: max |density - phi| = {:.4} (stderr {:.4}) on chi in [{}, {}], tolerance {}",
            last.l, last.max_gap, last.max_gap_stderr, c.chi_min, c.chi_max, c.gap_tolerance
        ),
    });
    if let Some(conv) = &report.convergence {
        let gaps: Vec<String> = conv.rows.iter().map(|r| format!("L={}: {:.4}", r.l, r.max_gap)).collect();
        out.push(CheckResult {
            name: "convergence_in_l".into(),
            passed: conv.decreasing,
            detail: format!(
                "{} ({} tolerated, {} significant increases)",
                gaps.join(", "),
                conv.tolerated_increases,
                conv.significant_increases
            ),
        });
    }
    if !c.height_radii.is_empty() && config.alpha > 0.0 {
        let worst = last
            .taus
            .iter()
            .filter(|t| t.tau > 0.0)
            .map(|t| t.height_max_rel_gap.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        let norms: Vec<String> =
            last.taus.iter().map(|t| format!("{:.4}", t.height_normalization.unwrap_or(f64::NAN))).collect();
        out.push(CheckResult {
            name: "height_function".into(),
            passed: worst <= c.height_tolerance,
            detail: format!(
                "L = {}: max relative gap {:.4} with fitted normalization [{}], tolerance {}",
                last.l,
                worst,
                norms.join(", "),
                c.height_tolerance
            ),
        });
    }
    out
}

/// Finite-size duality probe: the empty-start process density at single
/// sites against `alpha` times the dual-walk absorption probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityProbeConfig {
    pub d: usize,
    pub sqrt_l: f64,
    pub r_out: f64,
    pub outer_mode: OuterMode,
    pub m: u32,
    pub alpha: f64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    pub probes: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub site: Vec<i64>,
    pub density: f64,
    pub density_stderr: f64,
    pub dual: f64,
    pub dual_stderr: f64,
    /// Gap over the combined standard error.
    pub z: f64,
}

pub fn finite_size_duality(cfg: &DualityProbeConfig) -> Result<Vec<ProbeResult>> {
    let domain = DomainSpec::build(cfg.d, cfg.sqrt_l, cfg.r_out, cfg.outer_mode)?;
    let params = ProcessParams::new(cfg.m, cfg.alpha)?;
    let sites: Vec<usize> = cfg
        .probes
        .iter()
        .map(|z| {
            domain
                .site_id(z)
                .filter(|&s| domain.class_of(s) == crate::domain::SiteClass::Interior)
                .ok_or_else(|| invalid(format!("probe {z:?} is not an interior site")))
        })
        .collect::<Result<_>>()?;
    let occupancies: Vec<Vec<u32>> = with_workers(|| {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|rep| {
                let mut sim = Simulator::new(&domain, params, replica_rng(cfg.seed, rep as u64));
                sim.advance_to(cfg.t);
                sites.iter().map(|&s| sim.config().occupancy(s)).collect()
            })
            .collect()
    })?;
    sites
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let mut mom = Moments::default();
            for occ in &occupancies {
                mom.push(occ[k] as f64 / cfg.m as f64);
            }
            let (p, se) = dual_absorption_prob(&domain, cfg.m, s, cfg.t, cfg.replicas, cfg.seed.wrapping_add(1 + k as u64))?;
            let (dual, dual_stderr) = (cfg.alpha * p, cfg.alpha * se);
            let combined = mom.stderr().hypot(dual_stderr);
            let gap = mom.mean() - dual;
            Ok(ProbeResult {
                site: cfg.probes[k].clone(),
                density: mom.mean(),
                density_stderr: mom.stderr(),
                dual,
                dual_stderr,
                z: if gap == 0.0 { 0.0 } else { gap / combined.max(1e-12) },
            })
        })
        .collect()
}
