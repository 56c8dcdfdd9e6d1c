//! Task metrics, completion criteria and the benchmark runner.

mod bench;
mod criteria;
mod metrics;

pub use bench::{aggregate, run_benchmark, Aggregate, BenchConfig, BenchReport, Suite, SuiteTask, TaskReport};
pub use criteria::{
    evaluate_criteria, load_judgments, CompletionCriteria, CompletionPredicate, CriteriaResult,
    CriterionItem, ManualJudgments, ITEM_COUNTS,
};
pub use metrics::{
    compute_cr, compute_efficiency, compute_metrics, compute_oa, compute_ra, judge_sr,
    longest_repeat, round_to, sr_verdict, MetricsRecord, SrVerdict, StepAnnotations,
    SR_MAX_REPEATS, SR_MAX_STEPS,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid criteria: {0}")]
    InvalidCriteria(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
