use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sep_hydro::duality::{check_duality, DualConfig, SiteGraph};
use sep_hydro::harness::{run_experiment, write_outputs, ExperimentConfig};
use sep_hydro::hitting::{hitting_cdf, HittingSpec};
use sep_hydro::hydro::{
    big_n, pde_residual, phi, solve_height_pde_series, solve_radial_heat_series, CnSettings, ResidualGrid,
};
use sep_hydro::sep_process::ProcessParams;

#[derive(Parser)]
#[command(name = "sep-hydro", version, about = "Open exclusion process simulation and hydrodynamic-limit checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write density CSVs and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment, write its artifacts, and exit non-zero unless every check passes.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact duality check on a chain between two reservoirs; prints JSON.
    DualityCheck {
        /// Interior sites of the chain.
        #[arg(long, default_value_t = 3)]
        sites: usize,
        #[arg(long, default_value_t = 2)]
        m: u32,
        #[arg(long, default_value_t = 0.7)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Interior occupancies of the reservoir process, comma separated.
        #[arg(long, value_delimiter = ',')]
        state: Vec<u32>,
        /// Interior occupancies of the dual, comma separated.
        #[arg(long, value_delimiter = ',')]
        dual: Vec<u32>,
        /// Frozen dual particles at the two chain ends.
        #[arg(long, value_delimiter = ',', default_values_t = [0u32, 0])]
        dual_boundary: Vec<u32>,
    },
    /// First-passage probability P(tau_{r,1} <= tau) as CSV `r,tau,cdf`.
    Hitting {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        tau: f64,
        /// Radius table `rmin:rmax:step` instead of a single `--r`.
        #[arg(long)]
        table: Option<String>,
    },
    /// Crank–Nicolson profile as CSV `r,tau,value`, metadata as JSON.
    Pde {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        tau_end: f64,
        #[arg(long, value_enum, default_value_t = Field::Phi)]
        field: Field,
        #[arg(long)]
        dr: Option<f64>,
        #[arg(long)]
        dtau: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        /// Number of equally spaced output times in (0, tau_end].
        #[arg(long, default_value_t = 1)]
        slices: usize,
        /// Write the metadata here instead of stderr.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Field {
    /// Hitting profile with Dirichlet inner value.
    Phi,
    /// Height function with Neumann inner slope.
    Height,
}

fn parse_table(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number `{p}` in table")))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else { bail!("table must be rmin:rmax:step") };
    if !(step > 0.0) || hi < lo {
        bail!("table needs rmin <= rmax and step > 0");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

fn load_config(path: &PathBuf, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load_config(&config, out)?;
            let report = run_experiment(&cfg)?;
            for path in write_outputs(&report, &cfg.output_dir)? {
                writeln!(stdout, "{}", path.display())?;
            }
            Ok(true)
        }
        Command::Compare { config, out } => {
            let cfg = load_config(&config, out)?;
            let report = run_experiment(&cfg)?;
            write_outputs(&report, &cfg.output_dir)?;
            writeln!(
                stdout,
                "time scale: paper {} | variance {} | fitted {} | evaluated at {}",
                report.paper_time_scale,
                report.variance_time_scale,
                report.fitted_time_scale.map_or("n/a".to_string(), |s| format!("{s:.4}")),
                report.evaluation_time_scale
            )?;
            for c in &report.checks {
                writeln!(stdout, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            Ok(report.all_checks_pass())
        }
        Command::DualityCheck { sites, m, alpha, t, state, dual, dual_boundary } => {
            let graph = SiteGraph::segment(sites)?;
            let params = ProcessParams::new(m, alpha)?;
            let state = if state.is_empty() { vec![0; sites] } else { state };
            let mut d = DualConfig::empty(&graph);
            if !dual.is_empty() {
                if dual.len() != sites {
                    bail!("--dual needs {sites} values");
                }
                d.interior = dual;
            }
            if dual_boundary.len() != 2 {
                bail!("--dual-boundary needs 2 values");
            }
            d.boundary = dual_boundary;
            let check = check_duality(&graph, &params, &state, &d, t)?;
            serde_json::to_writer_pretty(&mut stdout, &check)?;
            writeln!(stdout)?;
            Ok(true)
        }
        Command::Hitting { d, r, tau, table } => {
            let radii = match (r, table) {
                (Some(r), None) => vec![r],
                (None, Some(t)) => parse_table(&t)?,
                _ => bail!("give exactly one of --r and --table"),
            };
            writeln!(stdout, "r,tau,cdf")?;
            for r in radii {
                let p = hitting_cdf(&HittingSpec::new(d, r, tau)?)?;
                writeln!(stdout, "{r},{tau},{p}")?;
            }
            Ok(true)
        }
        Command::Pde { d, alpha, tau_end, field, dr, dtau, r_max, slices, metadata } => {
            let mut settings = CnSettings::for_horizon(tau_end);
            settings.dr = dr.unwrap_or(settings.dr);
            settings.dtau = dtau.unwrap_or(settings.dtau);
            settings.r_max = r_max.unwrap_or(settings.r_max);
            let slices = slices.max(1);
            let taus: Vec<f64> = (1..=slices).map(|k| tau_end * k as f64 / slices as f64).collect();
            let fields = match field {
                Field::Phi => solve_radial_heat_series(d, alpha, &settings, &taus)?,
                Field::Height => solve_height_pde_series(d, alpha, &settings, &taus)?,
            };
            writeln!(stdout, "r,tau,value")?;
            for f in &fields {
                for (r, v) in f.r_grid.iter().zip(&f.values) {
                    writeln!(stdout, "{r},{},{v}", f.tau)?;
                }
            }
            let last = fields.last().expect("at least one slice");
            // gap against the analytic reference on a coarse subset of nodes
            let stride = (last.r_grid.len() / 200).max(1);
            let mut max_gap: f64 = 0.0;
            if last.tau > 0.0 {
                for (r, v) in last.r_grid.iter().zip(&last.values).step_by(stride) {
                    let reference = match field {
                        Field::Phi => phi(*r, last.tau, alpha, d)?,
                        Field::Height => big_n(*r, last.tau, d, alpha)?,
                    };
                    max_gap = max_gap.max((v - reference).abs());
                }
            }
            let residual = match field {
                Field::Phi => Some(pde_residual(d, alpha, &ResidualGrid::default())?),
                Field::Height => None,
            };
            #[derive(Serialize)]
            struct Meta {
                scheme: &'static str,
                field: Field,
                d: usize,
                alpha: f64,
                settings: CnSettings,
                steps: usize,
                max_gap_vs_reference: f64,
                reference_residual: Option<sep_hydro::hydro::Residual>,
                residual_grid: ResidualGrid,
            }
            let meta = Meta {
                scheme: "crank-nicolson with backward-euler start-up",
                field,
                d,
                alpha,
                settings,
                steps: (tau_end / settings.dtau).round() as usize,
                max_gap_vs_reference: max_gap,
                reference_residual: residual,
                residual_grid: ResidualGrid::default(),
            };
            let text = serde_json::to_string_pretty(&meta)? + "\n";
            match metadata {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => eprint!("{text}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parsing() {
        assert_eq!(parse_table("1:2:0.5").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_table("1.1:1.3:0.1").unwrap().len(), 3);
        assert!(parse_table("1:2").is_err());
        assert!(parse_table("2:1:0.1").is_err());
        assert!(parse_table("1:2:0").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
