//! Experiment runner: configuration, orchestration over either transport,
//! metrics output and the theory report.

pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod problem;
pub mod report;

pub use config::{Algorithm, Overrides, ProblemKind, RunConfig};
pub use error::{CliError, Result};
pub use experiment::{driver_main, run_experiment, worker_main, ExperimentOutcome, RunSummary};
pub use report::theory_report;
