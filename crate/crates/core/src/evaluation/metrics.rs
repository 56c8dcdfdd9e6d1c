//! CR, OA, RA, Steps, Efficiency and SR.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::criteria::{evaluate_criteria, CompletionCriteria, ManualJudgments};
use super::EvalError;
use crate::environment::Scenario;
use crate::model::Action;
use crate::orchestrator::{TerminationReason, Trajectory};

/// Longest run a successful task may take.
pub const SR_MAX_STEPS: usize = 30;
/// Most consecutive repeats of one action a successful task may contain.
pub const SR_MAX_REPEATS: usize = 5;

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

pub fn compute_cr(completed: usize, total: usize) -> Result<f64, EvalError> {
    if total == 0 {
        return Err(EvalError::InvalidCriteria("no completion items".into()));
    }
    if completed > total {
        return Err(EvalError::InvalidCriteria(format!(
            "{completed} completed of only {total} items"
        )));
    }
    Ok(percent(completed, total))
}

fn per_step(count: usize, steps: usize, what: &str) -> Result<f64, EvalError> {
    if steps == 0 {
        return Err(EvalError::InvalidTrajectory(format!("{what} of a run with no steps")));
    }
    if count > steps {
        return Err(EvalError::InvalidTrajectory(format!(
            "{count} correct {what} in {steps} steps"
        )));
    }
    Ok(percent(count, steps))
}

pub fn compute_oa(correct_ops: usize, steps: usize) -> Result<f64, EvalError> {
    per_step(correct_ops, steps, "operations")
}

pub fn compute_ra(correct_reflections: usize, steps: usize) -> Result<f64, EvalError> {
    per_step(correct_reflections, steps, "reflections")
}

/// Completion rate per step. `steps` may be a mean, so it is real.
pub fn compute_efficiency(cr: f64, steps: f64) -> Result<f64, EvalError> {
    if steps <= 0.0 {
        return Err(EvalError::InvalidTrajectory("efficiency of a run with no steps".into()));
    }
    Ok(cr / steps)
}

/// Longest run of identical consecutive actions.
pub fn longest_repeat<'a>(actions: impl IntoIterator<Item = &'a Action>) -> usize {
    let mut best = 0;
    let mut run = 0;
    let mut prev: Option<&Action> = None;
    for a in actions {
        run = if prev == Some(a) { run + 1 } else { 1 };
        best = best.max(run);
        prev = Some(a);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrVerdict {
    pub success: bool,
    pub within_step_limit: bool,
    pub no_erroneous_completion: bool,
    pub no_excess_repetition: bool,
}

/// SR from its three inputs.
pub fn sr_verdict(steps: usize, longest_repeat: usize, erroneous_completion: bool) -> SrVerdict {
    let within_step_limit = steps <= SR_MAX_STEPS;
    let no_excess_repetition = longest_repeat <= SR_MAX_REPEATS;
    SrVerdict {
        success: within_step_limit && !erroneous_completion && no_excess_repetition,
        within_step_limit,
        no_erroneous_completion: !erroneous_completion,
        no_excess_repetition,
    }
}

pub fn judge_sr(traj: &Trajectory, erroneous_completion: bool) -> SrVerdict {
    sr_verdict(traj.step_count(), longest_repeat(traj.actions()), erroneous_completion)
}

/// Per-step human verdicts for runs without a simulator oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAnnotations {
    pub operations: Vec<bool>,
    pub reflections: Vec<bool>,
}

impl StepAnnotations {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| EvalError::InvalidTrajectory(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task_id: String,
    pub cr: f64,
    pub oa: Option<f64>,
    pub ra: Option<f64>,
    pub steps: usize,
    pub efficiency: Option<f64>,
    pub sr: bool,
    pub sr_breakdown: SrVerdict,
    pub erroneous_completion: bool,
    pub termination: TerminationReason,
    pub completed_items: Vec<bool>,
    pub unjudged_manual_items: Vec<usize>,
}

/// Correct operation and reflection counts: annotations when given, else
/// the simulator oracle, else unknown.
fn correctness_counts(traj: &Trajectory, annotations: Option<&StepAnnotations>) -> Result<Option<(usize, usize)>, EvalError> {
    let n = traj.step_count();
    if let Some(a) = annotations {
        if a.operations.len() != n || a.reflections.len() != n {
            return Err(EvalError::InvalidTrajectory(format!(
                "annotations cover {}/{} steps of {n}",
                a.operations.len(),
                a.reflections.len()
            )));
        }
        let count = |v: &[bool]| v.iter().filter(|b| **b).count();
        return Ok(Some((count(&a.operations), count(&a.reflections))));
    }
    let has_oracle = traj
        .steps
        .iter()
        .any(|s| s.exec.as_ref().is_some_and(|e| e.oracle.is_some()));
    if !has_oracle {
        return Ok(None);
    }
    let ops = traj
        .steps
        .iter()
        .filter(|s| s.operation_correct() == Some(true))
        .count();
    let refl = traj
        .steps
        .iter()
        .filter(|s| s.reflection_correct() == Some(true))
        .count();
    Ok(Some((ops, refl)))
}

/// All metrics for one finished run. A run the Manager declared done while
/// criteria remain open is an erroneous completion.
pub fn compute_metrics(
    traj: &Trajectory,
    scenario: Option<&Scenario>,
    criteria: &CompletionCriteria,
    judgments: Option<&ManualJudgments>,
    annotations: Option<&StepAnnotations>,
) -> Result<MetricsRecord, EvalError> {
    let result = evaluate_criteria(traj, scenario, criteria, judgments)?;
    let cr = compute_cr(result.completed, criteria.items.len())?;
    let steps = traj.step_count();
    let erroneous_completion =
        traj.termination.reason == TerminationReason::ManagerDone && result.completed < criteria.items.len();
    let verdict = judge_sr(traj, erroneous_completion);
    let (oa, ra) = match (steps, correctness_counts(traj, annotations)?) {
        (0, _) | (_, None) => (None, None),
        (_, Some((ops, refl))) => (Some(compute_oa(ops, steps)?), Some(compute_ra(refl, steps)?)),
    };
    Ok(MetricsRecord {
        task_id: criteria.task_id.clone(),
        cr,
        oa,
        ra,
        steps,
        efficiency: if steps == 0 {
            None
        } else {
            Some(compute_efficiency(cr, steps as f64)?)
        },
        sr: verdict.success,
        sr_breakdown: verdict,
        erroneous_completion,
        termination: traj.termination.reason,
        completed_items: result.flags,
        unjudged_manual_items: result.unjudged,
    })
}

/// Rounds half away from zero to `places` decimals, for display.
pub fn round_to(value: f64, places: i32) -> f64 {
    let scale = 10f64.powi(places);
    (value * scale).round() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        assert_eq!(compute_cr(6, 8).unwrap(), 75.0);
        assert_eq!(compute_cr(0, 10).unwrap(), 0.0);
        assert_eq!(compute_cr(8, 8).unwrap(), 100.0);
        assert!(compute_cr(0, 0).is_err());
        assert!(compute_cr(9, 8).is_err());
        assert_eq!(compute_oa(17, 20).unwrap(), 85.0);
        assert_eq!(compute_ra(12, 12).unwrap(), 100.0);
        assert_eq!(compute_oa(0, 5).unwrap(), 0.0);
        assert!(compute_oa(1, 0).is_err());
        assert!(compute_efficiency(50.0, 0.0).is_err());
    }

    #[test]
    fn sr_boundaries() {
        assert!(sr_verdict(30, 1, false).success);
        let v = sr_verdict(31, 1, false);
        assert!(!v.success && !v.within_step_limit);
        let v = sr_verdict(10, 6, false);
        assert!(!v.success && !v.no_excess_repetition);
        assert!(sr_verdict(10, 5, false).success);
        assert!(!sr_verdict(10, 1, true).success);
    }

    #[test]
    fn repeat_runs() {
        let t = |x| Action::Tap { x, y: 0 };
        assert_eq!(longest_repeat(&[]), 0);
        assert_eq!(longest_repeat(&[t(1), t(1), t(2), t(2), t(2), t(1)]), 3);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_to(4.0265, 2), 4.03);
        assert_eq!(round_to(76.05, 1), 76.1);
    }
}
