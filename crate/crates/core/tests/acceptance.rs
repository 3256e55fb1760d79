//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Oracles are computed here, independently of the library
//! paths they check, wherever an independent route exists.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sep_hydro::domain::OuterMode;
use sep_hydro::duality::{DualConfig, DualityChecker, SiteGraph, DEFAULT_STATE_CAP};
use sep_hydro::harness::{finite_size_duality, run_experiment, write_outputs, DualityProbeConfig, ExperimentConfig};
use sep_hydro::hitting::{hitting_cdf, hitting_cdf_inverted, hitting_cdf_laplace, HittingSpec};
use sep_hydro::hydro::{big_n, height_slope_at_unit_radius, pde_residual, solve_height_pde_series, CnSettings, ResidualGrid};
use sep_hydro::sep_process::ProcessParams;
use sep_hydro::specfun::{bessel_k, bessel_k_prime, erfc};

// 1
const DUALITY_TOL: f64 = 1e-8;
const DUALITY_PAIRS: usize = 20;
const DUALITY_TIMES: [f64; 3] = [0.1, 1.0, 5.0];
// 2
const CLOSED_FORM_TOL: f64 = 1e-6;
const R_GRID: [f64; 5] = [1.1, 1.5, 2.0, 3.0, 5.0];
const TAU_GRID: [f64; 4] = [0.01, 0.1, 1.0, 4.0];
// 3
const ODE_TOL: f64 = 1e-6;
const DERIVATIVE_TOL: f64 = 1e-6;
const REFLECTION_TOL: f64 = 1e-12;
// 4
const ROUND_TRIP_TOL: f64 = 1e-4;
// 5
const RESIDUAL_TOL_CLOSED: f64 = 1e-3;
const RESIDUAL_TOL_INVERTED: f64 = 5e-3;
// 6
const PROBE_Z: f64 = 3.0;
const PROBE_REPLICAS: usize = 2000;
// 7
const PROFILE_GAP_TOL: f64 = 0.05;
const HYDRO_REPLICAS: usize = 400;
// 8
const HEIGHT_REL_TOL: f64 = 0.15;
const HEIGHT_PDE_TOL: f64 = 1e-3;
const NEUMANN_REL_TOL: f64 = 0.01;
// 9
const TAIL_BOUND: f64 = 1e-10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn criterion_1() -> Outcome {
    let graph = SiteGraph::segment(3).unwrap();
    let params = ProcessParams::new(2, 0.7).unwrap();
    let mut checker = DualityChecker::new(&graph, params, DEFAULT_STATE_CAP).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..DUALITY_PAIRS {
        let s: Vec<u32> = (0..3).map(|_| rng.random_range(0..=2)).collect();
        // up to two dual particles on the five nodes (3 interior, 2 boundary)
        let mut dual = DualConfig::empty(&graph);
        for _ in 0..rng.random_range(0..=2) {
            let node = rng.random_range(0..5);
            if node < 3 {
                dual.interior[node] += 1;
            } else {
                dual.boundary[node - 3] += 1;
            }
        }
        for &t in &DUALITY_TIMES {
            let c = checker.check(&s, &dual, t).unwrap();
            worst = worst.max(c.gap);
        }
    }
    outcome(worst <= DUALITY_TOL, format!("max gap {worst:.2e} over {DUALITY_PAIRS} pairs x 3 times (tol {DUALITY_TOL:e})"))
}

fn criterion_2() -> Outcome {
    let (mut fast, mut inverted): (f64, f64) = (0.0, 0.0);
    for &r in &R_GRID {
        for &tau in &TAU_GRID {
            let oracle = libm::erfc((r - 1.0) / (2.0 * tau).sqrt()) / r;
            let spec = HittingSpec::new(3, r, tau).unwrap();
            fast = fast.max((hitting_cdf(&spec).unwrap() - oracle).abs());
            inverted = inverted.max((hitting_cdf_inverted(&spec).unwrap() - oracle).abs());
        }
    }
    outcome(
        fast <= CLOSED_FORM_TOL && inverted <= CLOSED_FORM_TOL,
        format!("closed-form path {fast:.2e}, contour inversion {inverted:.2e} (tol {CLOSED_FORM_TOL:e})"),
    )
}

fn k_real(v: f64, z: f64) -> f64 {
    bessel_k(v, Complex64::new(z, 0.0)).unwrap().re
}

fn criterion_3() -> Outcome {
    let (mut ode, mut deriv): (f64, f64) = (0.0, 0.0);
    for &v in &[0.0, 0.5, 1.0, 1.5, 2.0] {
        for i in 0..=39 {
            let z = 0.5 + 19.5 * i as f64 / 39.0;
            let h = 1e-3 * z;
            let f = |x: f64| k_real(v, x);
            let (fm2, fm1, f0, fp1, fp2) = (f(z - 2.0 * h), f(z - h), f(z), f(z + h), f(z + 2.0 * h));
            // fourth-order central stencils
            let d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
            let d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
            let residual = z * z * d2 + z * d1 - (z * z + v * v) * f0;
            ode = ode.max(residual.abs() / ((z * z + v * v) * f0.abs()));
            let kp = bessel_k_prime(v, Complex64::new(z, 0.0)).unwrap().re;
            deriv = deriv.max((kp - d1).abs() / kp.abs());
        }
    }
    let mut reflection: f64 = 0.0;
    for i in 0..=100 {
        let z = -5.0 + 0.1 * i as f64;
        reflection = reflection.max((erfc(-z) - (2.0 - erfc(z))).abs());
    }
    outcome(
        ode <= ODE_TOL && deriv <= DERIVATIVE_TOL && reflection <= REFLECTION_TOL,
        format!("ODE residual {ode:.2e}, derivative relation {deriv:.2e}, erfc reflection {reflection:.2e}"),
    )
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_4() -> Outcome {
    let r = 2.0;
    let mut worst: f64 = 0.0;
    for &d in &[2usize, 3, 5] {
        let v = (d as f64 - 2.0) / 2.0;
        for &lambda in &[1.0, 2.0] {
            let cutoff = 40.0 / lambda;
            let numeric = simpson(
                |tau| {
                    let p = if tau == 0.0 { 0.0 } else { hitting_cdf(&HittingSpec::new(d, r, tau).unwrap()).unwrap() };
                    (-lambda * tau).exp() * p
                },
                0.0,
                cutoff,
                2000,
            );
            let exact = hitting_cdf_laplace(r, v, Complex64::new(lambda, 0.0)).unwrap().re;
            worst = worst.max((numeric / exact - 1.0).abs());
        }
    }
    outcome(worst <= ROUND_TRIP_TOL, format!("max relative gap {worst:.2e} at r = {r} (tol {ROUND_TRIP_TOL:e})"))
}

fn criterion_5() -> Outcome {
    let grid = ResidualGrid::default();
    let res: Vec<f64> = [1usize, 2, 3].iter().map(|&d| pde_residual(d, 1.0, &grid).unwrap().max_abs).collect();
    outcome(
        res[0] <= RESIDUAL_TOL_CLOSED && res[2] <= RESIDUAL_TOL_CLOSED && res[1] <= RESIDUAL_TOL_INVERTED,
        format!("d=1 {:.2e}, d=2 {:.2e}, d=3 {:.2e}", res[0], res[1], res[2]),
    )
}

fn criterion_6() -> Outcome {
    let cfg = DualityProbeConfig {
        d: 2,
        sqrt_l: 6.0,
        r_out: 30.0,
        outer_mode: OuterMode::Reflecting,
        m: 2,
        alpha: 1.0,
        t: 40.0,
        replicas: PROBE_REPLICAS,
        seed: 2024,
        probes: vec![
            vec![7, 0],
            vec![0, 8],
            vec![-9, 0],
            vec![0, -10],
            vec![5, 5],
            vec![-6, 6],
            vec![8, -8],
            vec![12, 3],
            vec![-4, 13],
            vec![15, 0],
        ],
    };
    let results = finite_size_duality(&cfg).unwrap();
    let worst = results.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    let spread: Vec<String> = results.iter().map(|p| format!("{:.3}/{:.3}", p.density, p.dual)).collect();
    outcome(
        worst <= PROBE_Z,
        format!("max |z| {worst:.2} over {} sites (density/dual: {})", results.len(), spread.join(" ")),
    )
}

fn hydro_config(out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
d = 3
m = 1
alpha = 1.0
l_values = [16, 64, 256]
taus = [0.5]
replicas = {HYDRO_REPLICAS}
master_seed = 20240601
fit_time_scale = true
output_dir = "{}"

[checks]
chi_min = 1.1
chi_max = 3.0
gap_tolerance = {PROFILE_GAP_TOL}
height_radii = [1.2, 1.5, 2.0]
height_tolerance = {HEIGHT_REL_TOL}
"#,
        out.display()
    ))
    .unwrap()
}

fn criteria_7_and_8() -> (Outcome, Outcome, Duration) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hydro_config(dir.path());
    let start = Instant::now();
    let report = run_experiment(&cfg).unwrap();
    write_outputs(&report, dir.path()).unwrap();
    let sim_time = start.elapsed();

    let gaps: Vec<String> = report.sizes.iter().map(|s| format!("L={}: {:.4}±{:.4}", s.l, s.max_gap, s.max_gap_stderr)).collect();
    let last = report.sizes.last().unwrap();
    let conv = report.convergence.as_ref().unwrap();
    let strictly_decreasing = report.sizes.windows(2).all(|w| w[1].max_gap < w[0].max_gap);
    let o7 = outcome(
        strictly_decreasing && conv.significant_increases == 0 && last.max_gap <= PROFILE_GAP_TOL,
        format!(
            "{}; fitted time scale {} vs 2dm = {} (dm = {}), evaluated at {}",
            gaps.join(", "),
            report.fitted_time_scale.map_or("n/a".into(), |s| format!("{s:.3}")),
            report.paper_time_scale,
            report.variance_time_scale,
            report.evaluation_time_scale
        ),
    );

    // height values from the same replicas
    let tau = &last.taus[0];
    let height_gap = tau.height_max_rel_gap.unwrap_or(f64::INFINITY);
    // height equation against quadrature, deterministic
    let settings = CnSettings::for_horizon(1.0);
    let mut pde_gap: f64 = 0.0;
    for field in solve_height_pde_series(3, 1.0, &settings, &[0.25, 0.5, 1.0]).unwrap() {
        for i in 0..=40 {
            let r = 1.0 + 0.1 * i as f64;
            pde_gap = pde_gap.max((field.value_at(r) - big_n(r, field.tau, 3, 1.0).unwrap()).abs());
        }
    }
    let mut neumann: f64 = 0.0;
    for (d, c) in [(2usize, 2.0 * PI), (3, 4.0 * PI)] {
        for &alpha in &[0.5, 1.0] {
            let slope = height_slope_at_unit_radius(1.0, d, alpha, 1e-3).unwrap();
            neumann = neumann.max((slope / (-c * alpha) - 1.0).abs());
        }
    }
    let o8 = outcome(
        height_gap <= HEIGHT_REL_TOL && pde_gap <= HEIGHT_PDE_TOL && neumann <= NEUMANN_REL_TOL,
        format!(
            "L={} relative gap {height_gap:.4} with normalization {:.4} (raw {:.4}); PDE vs quadrature {pde_gap:.2e}; Neumann constants {neumann:.2e}",
            last.l,
            tau.height_normalization.unwrap_or(f64::NAN),
            tau.height_max_rel_gap_raw.unwrap_or(f64::NAN)
        ),
    );
    (o7, o8, sim_time)
}

fn criterion_9() -> Outcome {
    let tail = |r: f64| r * r * hitting_cdf(&HittingSpec::new(3, r, 1.0).unwrap()).unwrap();
    let at10 = tail(10.0);
    let grid: Vec<f64> = (0..=70).map(|i| tail(5.0 + 0.1 * i as f64)).collect();
    let monotone = grid.windows(2).all(|w| w[1] < w[0]);
    outcome(at10 <= TAIL_BOUND && monotone, format!("r^2 P at r=10: {at10:.2e}; decreasing on [5, 12]: {monotone}"))
}

fn report(n: usize, name: &str, limit: Duration, elapsed: Duration, o: &Outcome) -> bool {
    let ok = o.passed && elapsed <= limit;
    println!(
        "{} [{n}] {name}: {} | {:.1}s (limit {}s)",
        if ok { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    ok
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let o = f();
    (o, start.elapsed())
}

fn main() {
    let secs = Duration::from_secs;
    let mut all = true;
    let (o, t) = timed(criterion_1);
    all &= report(1, "duality exactness", secs(10), t, &o);
    let (o, t) = timed(criterion_2);
    all &= report(2, "d=3 closed form and inversion", secs(5), t, &o);
    let (o, t) = timed(criterion_3);
    all &= report(3, "special functions", secs(5), t, &o);
    let (o, t) = timed(criterion_4);
    all &= report(4, "transform round trip", secs(30), t, &o);
    let (o, t) = timed(criterion_5);
    all &= report(5, "PDE residual", secs(60), t, &o);
    let (o, t) = timed(criterion_6);
    all &= report(6, "duality at finite L", secs(300), t, &o);
    let start = Instant::now();
    let (o7, o8, sim) = criteria_7_and_8();
    let extra = start.elapsed() - sim;
    all &= report(7, "hydrodynamic convergence", secs(1200), sim, &o7);
    all &= report(8, "height function", secs(600), extra, &o8);
    let (o, t) = timed(criterion_9);
    all &= report(9, "tail limit", secs(1), t, &o);
    if !all {
        std::process::exit(1);
    }
}
