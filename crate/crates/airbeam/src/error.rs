use std::path::PathBuf;

use thiserror::Error;

fn bullets(items: &[String]) -> String {
    items.iter().map(|p| format!("\n  - {p}")).collect()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("config parse error:{}", bullets(.0))]
    Parse(Vec<String>),

    #[error("invalid config:{}", bullets(.0))]
    Invalid(Vec<String>),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("sweep value {sweep_value}: {message}")]
    Point { sweep_value: f64, message: String },

    #[error("sweep value {sweep_value}, trial {trial}: {source}")]
    Trial {
        sweep_value: f64,
        trial: usize,
        source: airbeam_core::Error,
    },

    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Error)]
#[error("cannot write {path}: {source}")]
pub struct OutputError {
    pub path: PathBuf,
    pub source: std::io::Error,
}
