//! Experiment harness: JSON configuration, a sequential and resumable runner
//! with optional energy metering, an append-only results TSV and the
//! comparison/efficiency reports built from it.

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod record;
pub mod report;
pub mod runner;

pub use config::{suite_names, ExperimentConfig, MeterConfig, ModelEntry, ResolvedModel};
pub use error::HarnessError;
pub use record::{ExperimentRecord, Status};
pub use runner::{prepare, run_experiment, run_suite, Metering, Prepared, RunOptions, RESULTS_FILE};
