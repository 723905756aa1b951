//! Experiment runner: config parsing, CSV and SVG output, and the five
//! reference figures.

pub mod config;
pub mod error;
pub mod figures;
pub mod run;
pub mod svg;
pub mod table;

pub use config::ExperimentConfig;
pub use error::CliError;
