//! Experiment orchestration: configuration, replica runs, fits, and artifacts.

pub mod config;
pub mod experiment;
pub mod fit;
pub mod io;

pub use config::{CheckConfig, ExperimentConfig, WORKERS_ENV};
pub use experiment::{
    finite_size_duality, run_experiment, ComparisonReport, DualityProbeConfig, ProbeResult,
};
pub use fit::{convergence_table, fit_time_scale, ScaleFit, ScaleSample};
pub use io::write_outputs;
