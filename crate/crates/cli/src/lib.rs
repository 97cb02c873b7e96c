//! Reproducible experiments on top of `mel-core`: dataset generation,
//! training sweeps, theory verification, family enumeration and failover
//! simulation. The `mel` binary is a thin clap layer over these functions.

mod commands;
mod config;
mod digest;

pub use commands::{
    cmd_family, cmd_gen, cmd_simulate, cmd_train, cmd_verify_theory, thread_pool, GenOutcome, SimReport, TheorySummary,
    TrainOutcome, TrainRun, TrainSummary, DEFAULT_P,
};
pub use config::{DatasetSource, EnsembleConfig, EnsembleLayout, ExperimentConfig, FamilyConfig, PlanConfig};
pub use digest::{digest_bytes, digest_dir};

/// Command failure, split by the exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// A check ran and failed: exit code 1.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Core(#[from] mel_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use mel_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Verification(_) => 1,
            CliError::Core(E::Diverged { .. } | E::NonFinite(_) | E::NonFiniteGradient { .. } | E::State(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}
