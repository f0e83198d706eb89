//! Experiment runner for the Heston uncertain-λ solver: JSON configuration,
//! case-study experiments, CSV and SVG output.

pub mod config;
pub mod experiments;
pub mod svg;

pub use config::{Experiment, ExperimentConfig, PayoffConfig, PayoffName};
pub use experiments::{oracle_report, run, Context, Envelopes, OracleReport, RunOutput};
