//! Completion criteria: 8 or 10 equally weighted, checkable items per task.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::environment::Scenario;
use crate::model::Action;
use crate::orchestrator::Trajectory;

pub const ITEM_COUNTS: [usize; 2] = [8, 10];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "snake_case")]
pub enum CompletionPredicate {
    OpenedApp { name: String },
    /// Regex over the canonical text of an executed action.
    ExecutedActionMatching { pattern: String },
    VisitedScreen { id: String },
    /// Case-insensitive substring of the final notes.
    NoteContains { substring: String },
    /// Decided by a human; read from a judgments file.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionItem {
    #[serde(flatten)]
    pub predicate: CompletionPredicate,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionCriteria {
    pub task_id: String,
    pub items: Vec<CriterionItem>,
}

/// Item index to verdict for `manual` items.
pub type ManualJudgments = BTreeMap<usize, bool>;

impl CompletionCriteria {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !ITEM_COUNTS.contains(&self.items.len()) {
            return Err(EvalError::InvalidCriteria(format!(
                "task `{}` has {} items; expected 8 (two apps) or 10 (three apps)",
                self.task_id,
                self.items.len()
            )));
        }
        for (i, item) in self.items.iter().enumerate() {
            let empty = match &item.predicate {
                CompletionPredicate::OpenedApp { name } => name.trim().is_empty(),
                CompletionPredicate::ExecutedActionMatching { pattern } => {
                    Regex::new(pattern).map_err(|e| {
                        EvalError::InvalidCriteria(format!("item {i}: bad pattern: {e}"))
                    })?;
                    pattern.is_empty()
                }
                CompletionPredicate::VisitedScreen { id } => id.trim().is_empty(),
                CompletionPredicate::NoteContains { substring } => substring.trim().is_empty(),
                CompletionPredicate::Manual => false,
            };
            if empty {
                return Err(EvalError::InvalidCriteria(format!("item {i} has an empty argument")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let c: CompletionCriteria =
            serde_json::from_str(text).map_err(|e| EvalError::InvalidCriteria(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Self::from_json(&text)
            .map_err(|e| EvalError::InvalidCriteria(format!("{}: {e}", path.display())))
    }
}

pub fn load_judgments(path: &Path) -> Result<ManualJudgments, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| EvalError::InvalidCriteria(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaResult {
    pub flags: Vec<bool>,
    pub completed: usize,
    /// Manual items with no judgment; counted as not completed.
    pub unjudged: Vec<usize>,
}

fn executed(traj: &Trajectory) -> impl Iterator<Item = &Action> {
    traj.steps
        .iter()
        .filter(|s| s.exec.is_some())
        .filter_map(|s| s.action.as_ref())
}

/// Checks every item against the trajectory (and the scenario's screen to
/// app map when given).
pub fn evaluate_criteria(
    traj: &Trajectory,
    scenario: Option<&Scenario>,
    criteria: &CompletionCriteria,
    judgments: Option<&ManualJudgments>,
) -> Result<CriteriaResult, EvalError> {
    criteria.validate()?;
    let notes = traj.final_memory.notes.to_lowercase();
    let mut flags = Vec::with_capacity(criteria.items.len());
    let mut unjudged = Vec::new();
    for (i, item) in criteria.items.iter().enumerate() {
        let done = match &item.predicate {
            CompletionPredicate::OpenedApp { name } => {
                let opened = traj.steps.iter().any(|s| {
                    matches!(&s.action, Some(Action::OpenApp { app_name }) if app_name.eq_ignore_ascii_case(name))
                        && s.exec.as_ref().is_some_and(|e| e.changed != Some(false))
                });
                let shown = scenario.is_some_and(|sc| {
                    traj.visited_screens.iter().any(|id| {
                        sc.screen(id).is_some_and(|s| s.app.eq_ignore_ascii_case(name))
                    })
                });
                opened || shown
            }
            CompletionPredicate::ExecutedActionMatching { pattern } => {
                let re = Regex::new(pattern).expect("validated");
                executed(traj).any(|a| re.is_match(&a.render()))
            }
            CompletionPredicate::VisitedScreen { id } => traj.visited_screens.iter().any(|v| v == id),
            CompletionPredicate::NoteContains { substring } => {
                notes.contains(&substring.to_lowercase())
            }
            CompletionPredicate::Manual => match judgments.and_then(|j| j.get(&i)) {
                Some(v) => *v,
                None => {
                    unjudged.push(i);
                    false
                }
            },
        };
        flags.push(done);
    }
    Ok(CriteriaResult {
        completed: flags.iter().filter(|f| **f).count(),
        flags,
        unjudged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_wire_format() {
        let item: CriterionItem = serde_json::from_str(
            r#"{"kind": "opened_app", "args": {"name": "Maps"}, "description": "Opened Maps"}"#,
        )
        .unwrap();
        assert_eq!(
            item.predicate,
            CompletionPredicate::OpenedApp { name: "Maps".into() }
        );
        let manual: CriterionItem =
            serde_json::from_str(r#"{"kind": "manual", "description": "Summary is accurate"}"#).unwrap();
        assert_eq!(manual.predicate, CompletionPredicate::Manual);
        let back = serde_json::to_value(&item).unwrap();
        assert_eq!(back["args"]["name"], "Maps");
    }

    #[test]
    fn item_count_is_checked() {
        let item = CriterionItem {
            predicate: CompletionPredicate::Manual,
            description: "x".into(),
        };
        for n in 0..12 {
            let c = CompletionCriteria {
                task_id: "t".into(),
                items: vec![item.clone(); n],
            };
            assert_eq!(c.validate().is_ok(), n == 8 || n == 10, "n = {n}");
        }
        let mut c = CompletionCriteria {
            task_id: "t".into(),
            items: vec![item; 8],
        };
        c.items[0].predicate = CompletionPredicate::ExecutedActionMatching {
            pattern: "(".into(),
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn judgments_use_string_indices() {
        let j: ManualJudgments = serde_json::from_str(r#"{"0": true, "7": false}"#).unwrap();
        assert_eq!(j.get(&0), Some(&true));
        assert_eq!(j.get(&7), Some(&false));
    }
}
