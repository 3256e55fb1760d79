//! TOML experiment configuration.
//!
//! ```toml
//! d = 3
//! m = 1
//! alpha = 1.0
//! l_values = [16, 64, 256]     # strictly increasing
//! taus = [0.5]
//! replicas = 400
//! master_seed = 7
//! r_out_factor = 8.0           # outer radius in units of sqrt(L)
//! outer_mode = "reflecting"    # or "absorbing"
//! bin_width = 1.0
//! output_dir = "out"
//! # time_scale = 6.0           # default 2 d m
//! fit_time_scale = true
//! scale_multipliers = [0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0]   # candidates, in units of d m
//!
//! [checks]
//! chi_min = 1.1
//! chi_max = 3.0
//! gap_tolerance = 0.05
//! height_radii = [1.2, 1.5, 2.0]
//! height_tolerance = 0.15
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::OuterMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub m: u32,
    pub alpha: f64,
    pub l_values: Vec<u64>,
    pub taus: Vec<f64>,
    pub replicas: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_r_out_factor")]
    pub r_out_factor: f64,
    #[serde(default)]
    pub outer_mode: OuterMode,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Process time per unit of `tau L`; `None` means `2 d m`.
    #[serde(default)]
    pub time_scale: Option<f64>,
    #[serde(default)]
    pub fit_time_scale: bool,
    #[serde(default = "default_multipliers")]
    pub scale_multipliers: Vec<f64>,
    #[serde(default)]
    pub checks: CheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub chi_min: f64,
    pub chi_max: f64,
    pub gap_tolerance: f64,
    pub height_radii: Vec<f64>,
    pub height_tolerance: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            chi_min: 1.1,
            chi_max: 3.0,
            gap_tolerance: 0.05,
            height_radii: vec![1.2, 1.5, 2.0],
            height_tolerance: 0.15,
        }
    }
}

fn default_r_out_factor() -> f64 {
    8.0
}

fn default_bin_width() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_multipliers() -> Vec<f64> {
    vec![0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0]
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Time scale used when no fit is requested: the configured value or `2 d m`.
    pub fn nominal_time_scale(&self) -> f64 {
        self.time_scale.unwrap_or(2.0 * self.d as f64 * self.m as f64)
    }

    /// Every time scale at which snapshots are taken, ascending and deduplicated.
    pub fn snapshot_scales(&self) -> Vec<f64> {
        let mut scales = vec![self.nominal_time_scale()];
        if self.fit_time_scale {
            let dm = self.d as f64 * self.m as f64;
            scales.extend(self.scale_multipliers.iter().map(|k| k * dm));
        }
        scales.sort_by(f64::total_cmp);
        scales.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        scales
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(bad("d must be at least 1"));
        }
        if self.m == 0 || self.m > crate::sep_process::MAX_OCCUPANCY {
            return Err(bad(format!("m must be in 1..={}", crate::sep_process::MAX_OCCUPANCY)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(bad("alpha must be in [0, 1]"));
        }
        if self.l_values.is_empty() || self.l_values[0] == 0 {
            return Err(bad("l_values must be non-empty and positive"));
        }
        if self.l_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("l_values must be strictly increasing"));
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(bad("taus must be non-empty and >= 0"));
        }
        if self.replicas == 0 {
            return Err(bad("replicas must be at least 1"));
        }
        if !(self.r_out_factor > 1.0) {
            return Err(bad("r_out_factor must exceed 1"));
        }
        if !(self.bin_width > 0.0) {
            return Err(bad("bin_width must be positive"));
        }
        if let Some(s) = self.time_scale {
            if !(s > 0.0) {
                return Err(bad("time_scale must be positive"));
            }
        }
        if self.fit_time_scale && self.scale_multipliers.len() < 2 {
            return Err(bad("fitting the time scale needs at least two candidates"));
        }
        if self.scale_multipliers.iter().any(|k| !(*k > 0.0)) {
            return Err(bad("scale multipliers must be positive"));
        }
        let c = &self.checks;
        if !(c.chi_min >= 1.0 && c.chi_max > c.chi_min) {
            return Err(bad("checks need 1 <= chi_min < chi_max"));
        }
        if c.height_radii.iter().any(|r| !(*r >= 1.0)) {
            return Err(bad("height radii must be >= 1"));
        }
        Ok(())
    }
}

/// Worker-count override read from this environment variable.
pub const WORKERS_ENV: &str = "SEP_WORKERS";

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}
