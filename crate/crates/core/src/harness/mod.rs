//! Experiment harness: corpora, configuration, error metrics and sweeps.

use thiserror::Error;

use crate::code::CodeError;
use crate::prior::PriorError;

pub mod config;
pub mod corpus;
pub mod metrics;
pub mod pairs;
pub mod sweep;

pub use config::{DecoderConfig, ExperimentConfig, PriorConfig};
pub use corpus::load_corpus;
pub use metrics::{error_metrics, ErrorMetrics};
pub use sweep::{run_sweep, run_sweep_with, PriorHandle, SweepResult, SweepRow, TrialResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("decoder {decoder} failed on {:.1}% of frames at {ebn0_db} dB", rate * 100.0)]
    FailureRate { decoder: String, ebn0_db: f64, rate: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Configuration and input errors, as opposed to runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::Code(_) | HarnessError::Corpus(_))
    }
}
