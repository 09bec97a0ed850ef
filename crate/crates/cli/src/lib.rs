//! Experiment driver: data generation, training runs, sweeps, metrics and theory tables.

pub mod commands;
pub mod config;
mod output;
pub mod run;
pub mod sweep;

use std::path::PathBuf;

use fpe_core::FpeError;

pub use config::{ExperimentConfig, TaskConfig, Variant};
pub use run::{cmd_run, ExperimentResult};
pub use sweep::cmd_sweep;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(err: &FpeError) -> i32 {
    match err {
        FpeError::Input(_) | FpeError::Shape(_) => EXIT_CONFIG,
        FpeError::Format { .. } | FpeError::Io(_) | FpeError::Json(_) | FpeError::State(_) => EXIT_DATA,
        FpeError::Numeric(_) => EXIT_NUMERIC,
    }
}

/// Command-line values that replace the ones in a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub epochs: Option<usize>,
    pub pretrain_epochs: Option<usize>,
    pub lr: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.trials {
            cfg.train.trials = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.pretrain_epochs {
            cfg.pretrain_epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = Some(v.clone());
        }
    }
}
