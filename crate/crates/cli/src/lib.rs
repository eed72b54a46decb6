//! Batch command-line front end: CSV ingestion, config files, JSON reports and SVG plots.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod plot;
pub mod report;

pub use commands::{run_command, Outcome, OUT_DIR_ENV};
pub use dataset::{parse_dataset, InputDataset};
pub use error::CliError;
pub use plot::emit_plots;
pub use report::AnalysisReport;
