//! Knowledge-base construction: trace logging, filtering, manager KB
//! building and operator KB curation.
//!
//! Staging directory layout:
//!
//! ```text
//! <staging>/traces/<task>-<seq>.json   one RawTrace each
//! <staging>/screenshots/<sha256>.<ext> content-addressed screenshots
//! <staging>/staged.jsonl               OperatorDoc rows awaiting curation
//! ```

mod curate;
mod filter;
mod logging;
mod manager;

pub use curate::{
    curate, curate_interactive, read_decisions, write_decision, CurationDecision, CurationSummary,
    Verdict,
};
pub use filter::{filter_traces, stage_entries, write_filtered};
pub use logging::{log_trajectory, read_traces, RawTrace, TraceLogger, TraceRecord};
pub use manager::{build_manager_kb, parse_manager_source, ManagerSource};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::retrieval::RetrievalError;

pub const TRACES_DIR: &str = "traces";
pub const STAGED_FILE: &str = "staged.jsonl";

#[derive(Debug, Error)]
pub enum KbError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("duplicate instruction `{0}`")]
    DuplicateInstruction(String),
    #[error("entry {index}: {field} is empty")]
    EmptyField { index: usize, field: &'static str },
    #[error("staged entry {0} has no curation decision")]
    UncoveredEntry(u64),
    #[error("decision refers to unknown entry {0}")]
    UnknownEntry(u64),
    #[error("entry {0} has more than one decision")]
    DuplicateDecision(u64),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

impl KbError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        KbError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
