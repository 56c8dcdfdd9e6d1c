//! The perceive, plan, act, re-perceive, reflect, note loop.

mod runner;
mod trajectory;

pub use runner::{detect_repetition, run_task, update_error_flag, RunContext, ERROR_TRIGGER};
pub use trajectory::{
    CallRecord, OutcomeSource, Phase, PhaseRecord, StepRecord, Termination, TerminationReason,
    Trajectory, SCREENSHOT_DIR, TRAJECTORY_FILE,
};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{DEFAULT_K_ERR, DEFAULT_K_LOG};
use crate::retrieval::DEFAULT_MANAGER_K;

pub const DEFAULT_MAX_STEPS: usize = 30;
pub const DEFAULT_REPEAT_CAP: usize = 5;

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl OrchestratorError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        OrchestratorError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_steps: usize,
    /// Allowed consecutive repeats of one action; one more ends the run.
    pub repeat_cap: usize,
    pub k_retrieve: usize,
    pub k_err: usize,
    pub k_log: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_steps: DEFAULT_MAX_STEPS,
            repeat_cap: DEFAULT_REPEAT_CAP,
            k_retrieve: DEFAULT_MANAGER_K,
            k_err: DEFAULT_K_ERR,
            k_log: DEFAULT_K_LOG,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        if self.max_steps == 0 {
            return Err(OrchestratorError::Config("max_steps must be at least 1".into()));
        }
        if self.repeat_cap == 0 {
            return Err(OrchestratorError::Config("repeat_cap must be at least 1".into()));
        }
        if self.k_retrieve == 0 {
            return Err(OrchestratorError::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}
