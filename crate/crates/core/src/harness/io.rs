//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::experiment::ComparisonReport;
use crate::error::Result;

/// Name of the per-(L, tau) density file.
pub fn density_file_name(d: usize, m: u32, l: u64, tau: f64) -> String {
    format!("density_d{d}_m{m}_L{l}_tau{tau}.csv")
}

/// Header of density files.
pub const DENSITY_HEADER: &str = "bin_mid_chi,mean,stderr,n";

/// Writes one density CSV per (L, tau) and `summary.json` into `dir`,
/// returning the written paths.
pub fn write_outputs(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let cfg = &report.config;
    let mut written = Vec::new();
    for size in &report.sizes {
        for t in &size.taus {
            let mut text = String::from(DENSITY_HEADER);
            text.push('\n');
            for b in &t.bins {
                let _ = writeln!(text, "{},{},{},{}", b.chi, b.mean, b.stderr, cfg.replicas);
            }
            let path = dir.join(density_file_name(cfg.d, cfg.m, size.l, t.tau));
            fs::write(&path, text)?;
            written.push(path);
        }
    }
    let path = dir.join("summary.json");
    write_json(report, &path)?;
    written.push(path);
    Ok(written)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(density_file_name(3, 1, 256, 0.5), "density_d3_m1_L256_tau0.5.csv");
        assert_eq!(density_file_name(2, 2, 16, 1.0), "density_d2_m2_L16_tau1.csv");
    }
}
