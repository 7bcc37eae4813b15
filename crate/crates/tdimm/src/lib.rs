//! Experiment driver for the `tdimm-core` simulator.
//!
//! Reads TOML experiment files, runs design-point evaluations, sweeps and
//! functional validation, and writes CSV reports and per-rank DRAM traces.

pub mod commands;
pub mod config;
pub mod report;

pub use config::ExperimentConfig;

/// Errors surfaced to the command line, each with its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation fault: {0}")]
    Simulation(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Validation(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<tdimm_core::node::NodeError> for CliError {
    fn from(e: tdimm_core::node::NodeError) -> Self {
        match e {
            tdimm_core::node::NodeError::Config(m) => CliError::Config(m),
            fault => CliError::Simulation(fault.to_string()),
        }
    }
}

impl From<tdimm_core::workload::WorkloadError> for CliError {
    fn from(e: tdimm_core::workload::WorkloadError) -> Self {
        match e {
            tdimm_core::workload::WorkloadError::Fault(f) => CliError::Simulation(f.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
