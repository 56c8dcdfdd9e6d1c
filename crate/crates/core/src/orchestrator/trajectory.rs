use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OrchestratorError, RunConfig};
use crate::agents::{Role, UsageLedger};
use crate::environment::ExecReport;
use crate::model::{Action, OutcomeLabel, Screenshot, Subtask, TaskInstruction, WorkingMemory};

pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const SCREENSHOT_DIR: &str = "screenshots";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perceive,
    ManagerRetrieve,
    Manage,
    OperatorRetrieve,
    Operate,
    Execute,
    PostPerceive,
    Reflect,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: Phase,
    /// Milliseconds since the run started.
    pub start_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: Role,
    /// SHA-256 of the flattened prompt.
    pub prompt_digest: String,
    pub response: Option<String>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Who produced a step's outcome label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSource {
    Reflector,
    /// The reflector reply was unusable; the loop logged a failure itself.
    Fallback,
    /// The action failed validation and never reached the device.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub phases: Vec<PhaseRecord>,
    /// Error flag the Manager saw this step.
    pub error_flag: bool,
    pub subtask: Option<Subtask>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manager_exemplars: Vec<u64>,
    pub operator_exemplar: Option<u64>,
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_error: Option<String>,
    pub exec: Option<ExecReport>,
    pub outcome: Option<OutcomeLabel>,
    pub outcome_source: Option<OutcomeSource>,
    pub feedback: String,
    pub progress: String,
    pub notes: String,
    pub screenshot_before: String,
    pub screenshot_after: Option<String>,
    pub calls: Vec<CallRecord>,
    pub wall_ms: u64,
}

impl StepRecord {
    pub fn phase_order(&self) -> Vec<Phase> {
        self.phases.iter().map(|p| p.phase).collect()
    }

    /// The action changed the device, or was a Wait the oracle accepted.
    pub fn operation_correct(&self) -> Option<bool> {
        let exec = self.exec.as_ref()?;
        let changed = exec.changed?;
        let accepted_wait = matches!(self.action, Some(Action::Wait))
            && exec.oracle == Some(OutcomeLabel::Success);
        Some(changed || accepted_wait)
    }

    /// The reflector's label equals the oracle's.
    pub fn reflection_correct(&self) -> Option<bool> {
        let oracle = self.exec.as_ref()?.oracle?;
        Some(self.outcome_source == Some(OutcomeSource::Reflector) && self.outcome == Some(oracle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    ManagerDone,
    MaxSteps,
    RepetitionCap,
    ProviderFailure,
    DeviceFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Termination {
    pub reason: TerminationReason,
    /// Iteration during which the run ended.
    pub at_step: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: TaskInstruction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub backend: String,
    pub provider: String,
    pub embedder: String,
    pub config: RunConfig,
    pub steps: Vec<StepRecord>,
    /// Calls from the final, step-less iteration (such as the DONE reply).
    pub terminal_calls: Vec<CallRecord>,
    pub termination: Termination,
    pub final_memory: WorkingMemory,
    /// Screens shown, in order, when the backend reports them.
    pub visited_screens: Vec<String>,
    pub usage: UsageLedger,
    pub wall_ms: u64,
    #[serde(skip)]
    pub screenshots: BTreeMap<String, Screenshot>,
}

impl Trajectory {
    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().filter_map(|s| s.action.as_ref())
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Copy with every timing field zeroed, for reproducibility checks.
    pub fn normalized(&self) -> Trajectory {
        let mut t = self.clone();
        t.wall_ms = 0;
        let zero_calls = |calls: &mut Vec<CallRecord>| {
            for c in calls {
                c.latency_ms = 0;
            }
        };
        for s in &mut t.steps {
            s.wall_ms = 0;
            for p in &mut s.phases {
                p.start_ms = 0;
                p.duration_ms = 0;
            }
            zero_calls(&mut s.calls);
        }
        zero_calls(&mut t.terminal_calls);
        for u in t.usage.roles.values_mut() {
            u.latency_ms = 0;
        }
        t.usage.perceptor.latency_ms = 0;
        t
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    /// Writes `trajectory.json` and every referenced screenshot.
    pub fn save(&self, dir: &Path) -> Result<(), OrchestratorError> {
        let shots = dir.join(SCREENSHOT_DIR);
        fs::create_dir_all(&shots).map_err(|e| OrchestratorError::io(&shots, e))?;
        for (name, shot) in &self.screenshots {
            let path = shots.join(name);
            fs::write(&path, shot.file_bytes()).map_err(|e| OrchestratorError::io(&path, e))?;
        }
        let path = dir.join(TRAJECTORY_FILE);
        fs::write(&path, self.to_json() + "\n").map_err(|e| OrchestratorError::io(&path, e))
    }

    /// Reads `trajectory.json` plus whichever referenced screenshots exist
    /// beside it.
    pub fn load(dir: &Path) -> Result<Trajectory, OrchestratorError> {
        let path = if dir.is_file() {
            dir.to_path_buf()
        } else {
            dir.join(TRAJECTORY_FILE)
        };
        let text = fs::read_to_string(&path).map_err(|e| OrchestratorError::io(&path, e))?;
        let mut traj: Trajectory = serde_json::from_str(&text).map_err(|e| OrchestratorError::Format {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let shots = path.parent().unwrap_or(Path::new(".")).join(SCREENSHOT_DIR);
        let names: Vec<String> = traj
            .steps
            .iter()
            .flat_map(|s| std::iter::once(&s.screenshot_before).chain(&s.screenshot_after))
            .cloned()
            .collect();
        for name in names {
            let file = shots.join(&name);
            if file.is_file() && !traj.screenshots.contains_key(&name) {
                let shot = Screenshot::load(&file).map_err(|e| OrchestratorError::Format {
                    path: file.clone(),
                    reason: e.to_string(),
                })?;
                traj.screenshots.insert(name, shot);
            }
        }
        Ok(traj)
    }
}
