//! Seeded GD and Nesterov experiments on partitioned objectives: traces,
//! diagnostics, rate tables and plots.

pub mod commands;
pub mod experiment;
pub mod report;
pub mod spec;
pub mod svg;

use std::path::PathBuf;

use psc_core::objective::ObjectiveError;
use psc_core::optim::OptError;
use thiserror::Error;

pub use commands::{cmd_check, cmd_rates, cmd_run, CheckOutcome, Options, RateRow, RunOutcome};
pub use spec::ExperimentSpec;

#[derive(Debug, Error)]
pub enum PscError {
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("cannot parse spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot build instance: {0}")]
    Objective(#[from] ObjectiveError),
    #[error("trial {trial} ({method}) failed: {source}")]
    Optimizer {
        trial: usize,
        method: &'static str,
        source: OptError,
    },
}

impl PscError {
    /// 2 for usage, configuration and I/O errors; 1 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            PscError::Optimizer { .. } => 1,
            _ => 2,
        }
    }
}
