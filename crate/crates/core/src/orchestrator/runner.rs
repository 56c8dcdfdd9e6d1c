use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use super::trajectory::{
    CallRecord, OutcomeSource, Phase, PhaseRecord, StepRecord, Termination, TerminationReason,
    Trajectory,
};
use super::RunConfig;
use crate::agents::{
    manager_step, notetake_step, operator_step, prompt_gen_manager, prompt_gen_notetaker,
    prompt_gen_operator, prompt_gen_reflector, reflect_step, AgentError, ManagerDecision,
    ManagerPrompt, ModelRequest, ModelResponse, NotePrompt, OperatorPrompt, Provider,
    ReflectPrompt, UsageLedger,
};
use crate::environment::{DeviceBackend, EnvError, Perceptor};
use crate::model::{
    validate_action, ActionLogEntry, OutcomeLabel, PerceptionResult, Screenshot,
    TaskInstruction, WorkingMemory,
};
use crate::retrieval::{manager_retrieve, operator_retrieve, KnowledgeBase, ManagerDoc};

/// Consecutive failed actions that raise the error flag.
pub const ERROR_TRIGGER: usize = 2;

/// True iff the last two logged outcomes both failed.
pub fn update_error_flag(action_log: &[ActionLogEntry]) -> bool {
    action_log.len() >= ERROR_TRIGGER
        && action_log[action_log.len() - ERROR_TRIGGER..]
            .iter()
            .all(|e| !e.outcome.is_success())
}

/// True iff the last `cap + 1` logged actions are identical, arguments included.
pub fn detect_repetition(action_log: &[ActionLogEntry], cap: usize) -> bool {
    let n = cap + 1;
    action_log.len() >= n && {
        let tail = &action_log[action_log.len() - n..];
        tail.iter().all(|e| e.action == tail[0].action)
    }
}

/// Shared, read-only inputs of a run.
#[derive(Clone)]
pub struct RunContext {
    pub provider: Arc<dyn Provider>,
    pub kb: Arc<KnowledgeBase>,
    pub perceptor: Arc<dyn Perceptor>,
    pub config: RunConfig,
}

enum Stop {
    Done,
    Fail(TerminationReason, String),
}

struct Runner<'a> {
    ctx: &'a RunContext,
    instruction: &'a TaskInstruction,
    device: &'a mut dyn DeviceBackend,
    apps: Vec<String>,
    start: Instant,
    memory: WorkingMemory,
    exemplars: Vec<ManagerDoc>,
    screenshots: BTreeMap<String, Screenshot>,
    references: HashMap<PathBuf, Option<Screenshot>>,
    visited: Vec<String>,
    usage: UsageLedger,
    terminal_calls: Vec<CallRecord>,
}

impl Runner<'_> {
    fn ms_since_start(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn timed<T>(&mut self, phases: &mut Vec<PhaseRecord>, phase: Phase, f: impl FnOnce(&mut Self) -> T) -> T {
        let start_ms = self.ms_since_start();
        let t0 = Instant::now();
        let out = f(self);
        phases.push(PhaseRecord {
            phase,
            start_ms,
            duration_ms: t0.elapsed().as_millis() as u64,
        });
        out
    }

    fn call<T>(
        &mut self,
        request: &ModelRequest,
        step: impl FnOnce(&dyn Provider, &ModelRequest) -> (Result<T, AgentError>, Option<ModelResponse>),
    ) -> (Result<T, AgentError>, CallRecord) {
        let t0 = Instant::now();
        let (result, response) = step(self.ctx.provider.as_ref(), request);
        let latency_ms = t0.elapsed().as_millis() as u64;
        let (input_tokens, output_tokens) = response
            .as_ref()
            .map_or((0, 0), |r| (r.input_tokens, r.output_tokens));
        if response.is_some() {
            self.usage
                .record_call(request.role, input_tokens, output_tokens, latency_ms);
        }
        let record = CallRecord {
            role: request.role,
            prompt_digest: request.digest(),
            response: response.map(|r| r.text),
            input_tokens,
            output_tokens,
            latency_ms,
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        (result, record)
    }

    fn observe(&mut self) -> Result<(Screenshot, PerceptionResult, String), EnvError> {
        let shot = self.device.capture()?;
        let t0 = Instant::now();
        let perception = self.ctx.perceptor.perceive(&shot)?;
        self.usage
            .record_perception(t0.elapsed().as_millis() as u64);
        if let Some(id) = shot.screen_id() {
            if self.visited.last().map(String::as_str) != Some(id) {
                self.visited.push(id.to_string());
            }
        }
        let name = shot.file_name();
        self.screenshots.entry(name.clone()).or_insert_with(|| shot.clone());
        Ok((shot, perception, name))
    }

    fn reference_screenshot(&mut self, relpath: &std::path::Path) -> Option<Screenshot> {
        let path = self.ctx.kb.layout.resolve(relpath);
        self.references
            .entry(path.clone())
            .or_insert_with(|| match Screenshot::load(&path) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("cannot load exemplar screenshot {}: {e}", path.display());
                    None
                }
            })
            .clone()
    }

    /// One loop iteration. `Ok` means the step finished normally.
    fn iterate(&mut self, rec: &mut StepRecord) -> Result<(), (Stop, bool)> {
        let cfg = self.ctx.config;
        let t = rec.step;
        let mut phases = Vec::new();

        let observed = self.timed(&mut phases, Phase::Perceive, |r| r.observe());
        rec.phases = phases.clone();
        let (before, perception_before, before_name) =
            observed.map_err(|e| (Stop::Fail(TerminationReason::DeviceFailure, e.to_string()), false))?;
        rec.screenshot_before = before_name;

        if t == 1 {
            let hits = self.timed(&mut phases, Phase::ManagerRetrieve, |r| {
                manager_retrieve(r.instruction, &r.ctx.kb.manager, cfg.k_retrieve)
            });
            match hits {
                Ok(hits) => self.exemplars = hits.into_iter().map(|h| h.doc).collect(),
                Err(e) => log::warn!("manager retrieval failed, planning without exemplars: {e}"),
            }
            rec.manager_exemplars = self.exemplars.iter().map(|d| d.id).collect();
        }
        let request = prompt_gen_manager(&ManagerPrompt {
            instruction: self.instruction,
            memory: &self.memory,
            screenshot: &before,
            exemplars: &self.exemplars,
            apps: &self.apps,
            k_err: cfg.k_err,
        });
        let apps = self.apps.clone();
        let (decision, call) = self.timed(&mut phases, Phase::Manage, |r| {
            r.call(&request, |p, q| manager_step(p, q, &apps))
        });
        rec.phases = phases.clone();
        match decision {
            Ok(ManagerDecision::Done { plan }) => {
                if let Some(plan) = plan {
                    self.memory.plan = plan;
                }
                self.terminal_calls.push(call);
                return Err((Stop::Done, false));
            }
            Ok(ManagerDecision::Continue { plan, subtask }) => {
                self.memory.plan = plan;
                self.memory.subtask = Some(subtask);
                rec.calls.push(call);
            }
            Err(e @ AgentError::Provider(_)) => {
                self.terminal_calls.push(call);
                return Err((Stop::Fail(TerminationReason::ProviderFailure, e.to_string()), false));
            }
            Err(e) if self.memory.subtask.is_none() => {
                self.terminal_calls.push(call);
                return Err((Stop::Fail(TerminationReason::ProviderFailure, e.to_string()), false));
            }
            Err(e) => {
                log::warn!("step {t}: manager reply unusable, keeping previous subtask: {e}");
                rec.calls.push(call);
            }
        }
        rec.subtask = self.memory.subtask.clone();

        let subtask = self.memory.subtask.clone().expect("set above");
        let hit = self.timed(&mut phases, Phase::OperatorRetrieve, |r| match &subtask.app {
            Some(app) => operator_retrieve(&subtask.description, app, &r.ctx.kb.operators)
                .unwrap_or_else(|e| {
                    log::warn!("operator retrieval failed: {e}");
                    None
                }),
            None => None,
        });
        let exemplar = hit.and_then(|h| {
            let shot = self.reference_screenshot(&h.doc.screenshot)?;
            Some((h.doc, shot))
        });
        rec.operator_exemplar = exemplar.as_ref().map(|(d, _)| d.id);
        let request = prompt_gen_operator(&OperatorPrompt {
            instruction: self.instruction,
            memory: &self.memory,
            screenshot: &before,
            perception: &perception_before,
            exemplar: exemplar.as_ref().map(|(d, s)| (d, s)),
            k_log: cfg.k_log,
        });
        let (action, call) = self.timed(&mut phases, Phase::Operate, |r| r.call(&request, operator_step));
        rec.calls.push(call);
        rec.phases = phases.clone();
        let action = match action {
            Ok(a) => a,
            Err(e @ AgentError::Provider(_)) => {
                let call = rec.calls.pop().expect("pushed above");
                self.terminal_calls.append(&mut rec.calls);
                self.terminal_calls.push(call);
                return Err((Stop::Fail(TerminationReason::ProviderFailure, e.to_string()), false));
            }
            Err(e) => {
                rec.action_error = Some(e.to_string());
                return Ok(());
            }
        };
        rec.action = Some(action.clone());

        if let Err(e) = validate_action(&action, &before) {
            let feedback = format!("action rejected before execution: {e}");
            self.memory
                .record_outcome(action, OutcomeLabel::FailedNoChange, &feedback)
                .expect("feedback is non-empty");
            rec.outcome = Some(OutcomeLabel::FailedNoChange);
            rec.outcome_source = Some(OutcomeSource::Rejected);
            rec.feedback = feedback;
            return Ok(());
        }

        let exec = self.timed(&mut phases, Phase::Execute, |r| r.device.execute(&action));
        rec.phases = phases.clone();
        rec.exec = Some(exec.map_err(|e| (Stop::Fail(TerminationReason::DeviceFailure, e.to_string()), true))?);

        let observed = self.timed(&mut phases, Phase::PostPerceive, |r| r.observe());
        rec.phases = phases.clone();
        let (after, perception_after, after_name) =
            observed.map_err(|e| (Stop::Fail(TerminationReason::DeviceFailure, e.to_string()), true))?;
        rec.screenshot_after = Some(after_name);

        let request = prompt_gen_reflector(&ReflectPrompt {
            instruction: self.instruction,
            subtask: self.memory.subtask.as_ref(),
            action: &action,
            before: &before,
            after: &after,
            perception_before: &perception_before,
            perception_after: &perception_after,
            progress: &self.memory.progress,
        });
        let progress = self.memory.progress.clone();
        let (reflection, call) = self.timed(&mut phases, Phase::Reflect, |r| {
            r.call(&request, |p, q| reflect_step(p, q, &progress))
        });
        rec.calls.push(call);
        rec.phases = phases.clone();
        let (outcome, feedback, source) = match reflection {
            Ok(r) => {
                self.memory.progress = r.progress;
                (r.outcome, r.feedback, OutcomeSource::Reflector)
            }
            Err(e @ AgentError::Provider(_)) => {
                return Err((Stop::Fail(TerminationReason::ProviderFailure, e.to_string()), true));
            }
            Err(e) => (
                OutcomeLabel::FailedNoChange,
                format!("reflector reply unusable: {e}"),
                OutcomeSource::Fallback,
            ),
        };
        self.memory
            .record_outcome(action, outcome, &feedback)
            .expect("failed outcomes carry feedback");
        rec.outcome = Some(outcome);
        rec.outcome_source = Some(source);
        rec.feedback = feedback;
        rec.progress = self.memory.progress.clone();

        let request = prompt_gen_notetaker(&NotePrompt {
            instruction: self.instruction,
            plan: &self.memory.plan,
            subtask: self.memory.subtask.as_ref(),
            screenshot: &after,
            perception: &perception_after,
            progress: &self.memory.progress,
            notes: &self.memory.notes,
        });
        let previous = self.memory.notes.clone();
        let (notes, call) = self.timed(&mut phases, Phase::Note, |r| {
            r.call(&request, |p, q| notetake_step(p, q, &previous))
        });
        rec.calls.push(call);
        rec.phases = phases;
        match notes {
            Ok(n) => self.memory.notes = n,
            Err(e) => {
                return Err((Stop::Fail(TerminationReason::ProviderFailure, e.to_string()), true));
            }
        }
        rec.notes = self.memory.notes.clone();
        Ok(())
    }
}

fn empty_record(step: u32, error_flag: bool) -> StepRecord {
    StepRecord {
        step,
        phases: Vec::new(),
        error_flag,
        subtask: None,
        manager_exemplars: Vec::new(),
        operator_exemplar: None,
        action: None,
        action_error: None,
        exec: None,
        outcome: None,
        outcome_source: None,
        feedback: String::new(),
        progress: String::new(),
        notes: String::new(),
        screenshot_before: String::new(),
        screenshot_after: None,
        calls: Vec::new(),
        wall_ms: 0,
    }
}

/// Runs one task to termination. Failures are recorded in the trajectory,
/// never returned.
pub fn run_task(
    instruction: &TaskInstruction,
    task_id: Option<String>,
    device: &mut dyn DeviceBackend,
    ctx: &RunContext,
) -> Trajectory {
    let cfg = ctx.config;
    let backend = device.describe();
    let mut runner = Runner {
        ctx,
        instruction,
        apps: device.apps(),
        device,
        start: Instant::now(),
        memory: WorkingMemory::new(),
        exemplars: Vec::new(),
        screenshots: BTreeMap::new(),
        references: HashMap::new(),
        visited: Vec::new(),
        usage: UsageLedger::default(),
        terminal_calls: Vec::new(),
    };
    let mut steps: Vec<StepRecord> = Vec::new();
    let termination = loop {
        let t = steps.len() as u32 + 1;
        runner.memory.step = t;
        runner.memory.error_flag = update_error_flag(&runner.memory.action_log);
        let mut rec = empty_record(t, runner.memory.error_flag);
        let t0 = Instant::now();
        let result = runner.iterate(&mut rec);
        rec.wall_ms = t0.elapsed().as_millis() as u64;
        let stop = match result {
            Ok(()) => None,
            Err((stop, keep)) => {
                if keep {
                    rec.progress = runner.memory.progress.clone();
                    rec.notes = runner.memory.notes.clone();
                    steps.push(rec.clone());
                } else {
                    runner.terminal_calls.append(&mut rec.calls);
                }
                Some(stop)
            }
        };
        let end = |reason, detail| Termination {
            reason,
            at_step: t,
            detail,
        };
        match stop {
            Some(Stop::Done) => break end(TerminationReason::ManagerDone, None),
            Some(Stop::Fail(reason, detail)) => break end(reason, Some(detail)),
            None => {
                steps.push(rec);
                if detect_repetition(&runner.memory.action_log, cfg.repeat_cap) {
                    break end(TerminationReason::RepetitionCap, None);
                }
                if steps.len() >= cfg.max_steps {
                    break end(TerminationReason::MaxSteps, None);
                }
            }
        }
    };
    log::info!(
        "task finished after {} steps: {:?}",
        steps.len(),
        termination.reason
    );
    Trajectory {
        task: instruction.clone(),
        task_id,
        backend,
        provider: ctx.provider.describe(),
        embedder: ctx.kb.manager.embedder().describe(),
        config: cfg,
        steps,
        terminal_calls: runner.terminal_calls,
        termination,
        final_memory: runner.memory,
        visited_screens: runner.visited,
        usage: runner.usage,
        wall_ms: runner.start.elapsed().as_millis() as u64,
        screenshots: runner.screenshots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;
    use crate::model::OutcomeLabel::*;

    fn log_of(outcomes: &[OutcomeLabel]) -> Vec<ActionLogEntry> {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| ActionLogEntry {
                step: i as u32 + 1,
                action: Action::Tap { x: i as u32, y: 0 },
                outcome: *o,
            })
            .collect()
    }

    fn brute_force_flag(log: &[ActionLogEntry]) -> bool {
        let n = log.len();
        n >= 2 && !log[n - 1].outcome.is_success() && !log[n - 2].outcome.is_success()
    }

    #[test]
    fn error_flag_examples_and_exhaustive_check() {
        assert!(update_error_flag(&log_of(&[Success, FailedWrongPage, FailedNoChange])));
        assert!(!update_error_flag(&log_of(&[FailedWrongPage, Success])));
        assert!(!update_error_flag(&[]));
        assert!(!update_error_flag(&log_of(&[FailedNoChange])));
        // Every outcome sequence up to length 5.
        for len in 0..=5u32 {
            for code in 0..3u32.pow(len) {
                let outcomes: Vec<_> = (0..len)
                    .map(|i| OutcomeLabel::ALL[((code / 3u32.pow(i)) % 3) as usize])
                    .collect();
                let log = log_of(&outcomes);
                assert_eq!(update_error_flag(&log), brute_force_flag(&log));
            }
        }
    }

    fn taps(points: &[(u32, u32)]) -> Vec<ActionLogEntry> {
        points
            .iter()
            .map(|&(x, y)| ActionLogEntry {
                step: 0,
                action: Action::Tap { x, y },
                outcome: Success,
            })
            .collect()
    }

    #[test]
    fn repetition_boundaries() {
        assert!(detect_repetition(&taps(&[(100, 200); 6]), 5));
        assert!(!detect_repetition(&taps(&[(100, 200); 5]), 5));
        let mut log = taps(&[(100, 200); 5]);
        log.extend(taps(&[(100, 201)]));
        assert!(!detect_repetition(&log, 5));
        let mut log = taps(&[(1, 1)]);
        log.extend(taps(&[(100, 200); 6]));
        assert!(detect_repetition(&log, 5));
    }
}
