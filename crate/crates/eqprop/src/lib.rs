//! Experiment harness around `eqprop-core`: dataset loading, experiment
//! configuration, checkpoints, metrics files, and the oracle commands the
//! CLI exposes.
//!
//! Everything that touches the filesystem or wall clock lives here; the
//! core crate stays pure.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod runner;

pub use config::{DatasetName, ExperimentConfig, ModelKind};
pub use data::{batches, load_idx, Dataset, Split};
pub use error::{CliError, CliResult};
