//! Experiment files, seeded parallel Monte Carlo runs and CSV output for the
//! over-the-air beamforming simulator.

pub mod config;
pub mod csv;
pub mod error;
pub mod experiment;

pub use config::{load_config, parse_config, ExperimentKind, ExperimentSpec, SweepVariable};
pub use csv::{render_csv, write_csv};
pub use error::{ConfigError, OutputError, RunError};
pub use experiment::{run_experiment, run_experiment_with, Metric, ResultRow};
