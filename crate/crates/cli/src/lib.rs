//! Experiment harness around the `ferroprop` solvers: model generation, solver
//! runs with trace and state artifacts, residual reports and SVG plots.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod report;

pub use config::{Algorithm, ExperimentConfig, InitKind, ModelSource, ReferenceSpec};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, RunSummary};
pub use report::{emit_report, ReportSummary};
