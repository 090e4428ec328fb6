//! Configuration-driven experiment runner for `gbf`: TOML configs, price
//! ingestion, replicate orchestration, backtests and run manifests.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod config;
pub mod experiment;
pub mod ingest;
pub mod manifest;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::run_experiment;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("ingestion error at line {line}: {msg}")]
    Ingest { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] gbf::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    /// Some replicates failed; the rest of the run directory is complete.
    #[error("{failed} of {total} replicates failed (see {DIAGNOSTICS})", DIAGNOSTICS = experiment::DIAGNOSTICS_FILE)]
    Partial { failed: usize, total: usize },
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 3 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}
