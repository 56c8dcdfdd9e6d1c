//! Best-effort recording of (subtask, screenshot, action) during runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{KbError, TRACES_DIR};
use crate::model::{Action, Screenshot};
use crate::orchestrator::Trajectory;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub subtask: String,
    /// App the subtask ran in; `None` for Home-screen work.
    pub app: Option<String>,
    /// Relative to the staging directory.
    pub screenshot: PathBuf,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTrace {
    pub task_id: String,
    pub records: Vec<TraceRecord>,
    pub success: bool,
}

impl RawTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn action_names(&self) -> Vec<&'static str> {
        self.records.iter().map(|r| r.action.name()).collect()
    }
}

/// Stores `shot` under `<staging>/screenshots/` by content hash and returns
/// its staging-relative path.
pub(crate) fn stage_screenshot(staging: &Path, shot: &Screenshot) -> Result<PathBuf, KbError> {
    let rel = PathBuf::from("screenshots").join(shot.file_name());
    let path = staging.join(&rel);
    if !path.exists() {
        let dir = path.parent().expect("has parent");
        fs::create_dir_all(dir).map_err(|e| KbError::io(dir, e))?;
        fs::write(&path, shot.file_bytes()).map_err(|e| KbError::io(&path, e))?;
    }
    Ok(rel)
}

/// A logging session for one run. The first IO failure ends the session;
/// later calls do nothing.
#[derive(Debug)]
pub struct TraceLogger {
    staging: Option<PathBuf>,
    trace: RawTrace,
}

impl TraceLogger {
    pub fn new(staging: &Path, task_id: &str) -> Self {
        Self {
            staging: Some(staging.to_path_buf()),
            trace: RawTrace {
                task_id: task_id.into(),
                records: Vec::new(),
                success: false,
            },
        }
    }

    /// A session that records nothing.
    pub fn disabled() -> Self {
        Self {
            staging: None,
            trace: RawTrace {
                task_id: String::new(),
                records: Vec::new(),
                success: false,
            },
        }
    }

    pub fn is_active(&self) -> bool {
        self.staging.is_some()
    }

    pub fn trace(&self) -> &RawTrace {
        &self.trace
    }

    pub fn log_step(&mut self, subtask: &str, app: Option<&str>, shot: &Screenshot, action: &Action) {
        let Some(staging) = &self.staging else { return };
        match stage_screenshot(staging, shot) {
            Ok(screenshot) => self.trace.records.push(TraceRecord {
                subtask: subtask.into(),
                app: app.map(str::to_string),
                screenshot,
                action: action.clone(),
            }),
            Err(e) => {
                log::warn!("KB logging stopped: {e}");
                self.staging = None;
            }
        }
    }

    /// Writes the trace as `<staging>/traces/<task>-<seq>.json`.
    pub fn finish(self, success: bool) -> Option<PathBuf> {
        let staging = self.staging?;
        let mut trace = self.trace;
        trace.success = success;
        match write_trace(&staging, &trace) {
            Ok(path) => Some(path),
            Err(e) => {
                log::warn!("KB logging could not save the trace: {e}");
                None
            }
        }
    }
}

fn write_trace(staging: &Path, trace: &RawTrace) -> Result<PathBuf, KbError> {
    let dir = staging.join(TRACES_DIR);
    fs::create_dir_all(&dir).map_err(|e| KbError::io(&dir, e))?;
    let prefix = format!("{}-", trace.task_id);
    let seq = fs::read_dir(&dir)
        .map_err(|e| KbError::io(&dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with(&prefix))
        .count();
    let path = dir.join(format!("{prefix}{seq:04}.json"));
    let json = serde_json::to_string_pretty(trace).expect("trace serializes");
    fs::write(&path, json + "\n").map_err(|e| KbError::io(&path, e))?;
    Ok(path)
}

/// Logs every executed step of a finished run.
pub fn log_trajectory(staging: &Path, traj: &Trajectory, success: bool) -> Option<PathBuf> {
    let task_id = traj.task_id.clone().unwrap_or_else(|| "task".into());
    let mut logger = TraceLogger::new(staging, &task_id);
    for step in &traj.steps {
        let (Some(action), Some(subtask)) = (&step.action, &step.subtask) else {
            continue;
        };
        if step.exec.is_none() {
            continue;
        }
        let Some(shot) = traj.screenshots.get(&step.screenshot_before) else {
            continue;
        };
        logger.log_step(&subtask.description, subtask.app.as_deref(), shot, action);
    }
    logger.finish(success)
}

/// All traces under `<dir>/traces`, in file-name order.
pub fn read_traces(dir: &Path) -> Result<Vec<RawTrace>, KbError> {
    let traces = dir.join(TRACES_DIR);
    let mut files: Vec<PathBuf> = fs::read_dir(&traces)
        .map_err(|e| KbError::io(&traces, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| KbError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| KbError::Format {
                path: p.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}
