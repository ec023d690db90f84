//! Experiment configuration, parallel ensembles, estimators and report
//! emission for the coupling simulator.

pub mod checks;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod oracle;
pub mod report;

pub use config::{ExperimentConfig, ExperimentKind, Profile};
pub use ensemble::{resolve_threads, run_ensemble, THREADS_ENV};
pub use error::{HarnessError, Result};
pub use experiments::run_experiment;
pub use report::{Check, ReportBundle, Table};
