//! Seeded Monte Carlo experiments and their result files.

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

pub use config::{parse_config, parse_config_with_warnings, ConfigError, ExperimentConfig, ExperimentKind};
pub use output::{parse_raw_csv, parse_summary_csv, write_results};
pub use run::{replicate_seed, run_experiment, run_with_warnings, ExperimentResult, ReplicateRow, SummaryRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] ConfigError),

    #[error("numeric failure: {0}")]
    Numeric(#[from] crate::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
