//! Experiment configuration, orchestration and CSV artifacts.

pub mod config;
pub mod csv;
pub mod runner;

pub use config::{load_config, load_config_with, parse_config, preset, ExperimentConfig, ExperimentKind, Overrides};
pub use csv::{read_csv, write_all, write_csv, CsvArtifact};
pub use runner::{run_experiment, RunOutput};
