//! Response parsing and the four role calls.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::provider::Provider;
use super::request::{ModelRequest, ModelResponse, Role};
use super::AgentError;
use crate::model::{parse_action, Action, OutcomeLabel, Subtask};

pub const SECTION_LABELS: [&str; 8] = [
    "PLAN", "SUBTASK", "APP", "ACTION", "OUTCOME", "PROGRESS", "FEEDBACK", "NOTES",
];
pub const DONE_SENTINEL: &str = "DONE";
pub const UNCHANGED_SENTINEL: &str = "<unchanged>";

/// Splits a response into labelled sections. A section starts at a line
/// beginning with a known label and a colon (any case, optionally wrapped in
/// `**`) and runs to the next one. The first occurrence of a label wins.
pub fn parse_sections(text: &str) -> BTreeMap<&'static str, String> {
    let mut out: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut current: Option<(&'static str, String)> = None;
    let flush = |cur: Option<(&'static str, String)>, out: &mut BTreeMap<_, _>| {
        if let Some((label, body)) = cur {
            out.entry(label).or_insert_with(|| body.trim().to_string());
        }
    };
    for line in text.lines() {
        if let Some((label, rest)) = match_label(line) {
            flush(current.take(), &mut out);
            current = Some((label, rest.to_string()));
        } else if let Some((_, body)) = current.as_mut() {
            body.push('\n');
            body.push_str(line);
        }
    }
    flush(current, &mut out);
    out
}

fn match_label(line: &str) -> Option<(&'static str, &str)> {
    let trimmed = line.trim_start().trim_start_matches("**");
    let (head, rest) = trimmed.split_once(':')?;
    let head = head.trim_end_matches("**").trim();
    let label = SECTION_LABELS
        .iter()
        .find(|l| l.eq_ignore_ascii_case(head))?;
    Some((label, rest.trim_start_matches("**")))
}

fn format_error(role: Role, reason: impl Into<String>) -> AgentError {
    AgentError::ResponseFormat {
        role,
        reason: reason.into(),
    }
}

fn call(provider: &dyn Provider, request: &ModelRequest) -> Result<ModelResponse, AgentError> {
    Ok(provider.complete(request)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum ManagerDecision {
    Continue { plan: String, subtask: Subtask },
    /// The Manager judged the task complete.
    Done { plan: Option<String> },
}

/// Parses PLAN / SUBTASK / APP. APP must be a registered app or `None`.
pub fn parse_manager(text: &str, apps: &[String]) -> Result<ManagerDecision, AgentError> {
    let s = parse_sections(text);
    let plan = s.get("PLAN").filter(|p| !p.is_empty()).cloned();
    let subtask = s
        .get("SUBTASK")
        .filter(|t| !t.is_empty())
        .ok_or_else(|| format_error(Role::Manager, "missing SUBTASK section"))?;
    if subtask.eq_ignore_ascii_case(DONE_SENTINEL) {
        return Ok(ManagerDecision::Done { plan });
    }
    let plan = plan.ok_or_else(|| format_error(Role::Manager, "missing PLAN section"))?;
    let app = s
        .get("APP")
        .ok_or_else(|| format_error(Role::Manager, "missing APP section"))?;
    let app = if app.eq_ignore_ascii_case("none") {
        None
    } else if let Some(known) = apps.iter().find(|a| a.eq_ignore_ascii_case(app)) {
        Some(known.clone())
    } else {
        return Err(format_error(
            Role::Manager,
            format!("unknown app `{app}` (registered: {})", apps.join(", ")),
        ));
    };
    Ok(ManagerDecision::Continue {
        plan,
        subtask: Subtask {
            description: subtask.clone(),
            app,
        },
    })
}

pub fn manager_step(
    provider: &dyn Provider,
    request: &ModelRequest,
    apps: &[String],
) -> (Result<ManagerDecision, AgentError>, Option<ModelResponse>) {
    match call(provider, request) {
        Ok(resp) => (parse_manager(&resp.text, apps), Some(resp)),
        Err(e) => (Err(e), None),
    }
}

/// Reads the ACTION section, or the whole reply when it has none.
pub fn parse_operator(text: &str) -> Result<Action, AgentError> {
    let s = parse_sections(text);
    let line = match s.get("ACTION") {
        Some(a) => a.lines().next().unwrap_or_default().trim().to_string(),
        None => text.trim().to_string(),
    };
    Ok(parse_action(&line)?)
}

pub fn operator_step(
    provider: &dyn Provider,
    request: &ModelRequest,
) -> (Result<Action, AgentError>, Option<ModelResponse>) {
    match call(provider, request) {
        Ok(resp) => (parse_operator(&resp.text), Some(resp)),
        Err(e) => (Err(e), None),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub outcome: OutcomeLabel,
    pub progress: String,
    pub feedback: String,
}

/// Parses OUTCOME / PROGRESS / FEEDBACK. Feedback is required on failure.
/// A missing PROGRESS keeps `previous_progress`.
pub fn parse_reflection(text: &str, previous_progress: &str) -> Result<Reflection, AgentError> {
    let s = parse_sections(text);
    let code = s
        .get("OUTCOME")
        .ok_or_else(|| format_error(Role::Reflector, "missing OUTCOME section"))?;
    let code = code.split_whitespace().next().unwrap_or_default();
    let code = code.trim_matches(|c: char| !c.is_ascii_alphanumeric());
    let outcome = OutcomeLabel::from_code(&code.to_ascii_uppercase())
        .ok_or_else(|| format_error(Role::Reflector, format!("unknown outcome code `{code}`")))?;
    let feedback = s.get("FEEDBACK").cloned().unwrap_or_default();
    if !outcome.is_success() && feedback.is_empty() {
        return Err(format_error(
            Role::Reflector,
            format!("outcome {} needs FEEDBACK", outcome.code()),
        ));
    }
    let progress = s
        .get("PROGRESS")
        .cloned()
        .unwrap_or_else(|| previous_progress.to_string());
    Ok(Reflection {
        outcome,
        progress,
        feedback,
    })
}

pub fn reflect_step(
    provider: &dyn Provider,
    request: &ModelRequest,
    previous_progress: &str,
) -> (Result<Reflection, AgentError>, Option<ModelResponse>) {
    match call(provider, request) {
        Ok(resp) => (parse_reflection(&resp.text, previous_progress), Some(resp)),
        Err(e) => (Err(e), None),
    }
}

/// Full replacement notes. `<unchanged>` keeps the previous notes; a reply
/// without a NOTES label is taken whole.
pub fn parse_notes(text: &str, previous: &str) -> String {
    let s = parse_sections(text);
    let notes = s
        .get("NOTES")
        .cloned()
        .unwrap_or_else(|| text.trim().to_string());
    if notes == UNCHANGED_SENTINEL {
        previous.to_string()
    } else {
        notes
    }
}

pub fn notetake_step(
    provider: &dyn Provider,
    request: &ModelRequest,
    previous: &str,
) -> (Result<String, AgentError>, Option<ModelResponse>) {
    match call(provider, request) {
        Ok(resp) => (Ok(parse_notes(&resp.text, previous)), Some(resp)),
        Err(e) => (Err(e), None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::provider::{ScriptStep, ScriptedProvider};
    use crate::agents::request::UserPart;

    fn apps() -> Vec<String> {
        vec!["Maps".into(), "Notes".into()]
    }

    #[test]
    fn sections_span_lines_and_ignore_case() {
        let s = parse_sections("Plan: 1. open maps\n2. search\n**SUBTASK:** Open Maps\napp: Maps\nPLAN: ignored");
        assert_eq!(s["PLAN"], "1. open maps\n2. search");
        assert_eq!(s["SUBTASK"], "Open Maps");
        assert_eq!(s["APP"], "Maps");
    }

    #[test]
    fn manager_parsing() {
        let d = parse_manager("PLAN: p\nSUBTASK: Open Maps\nAPP: maps", &apps()).unwrap();
        assert_eq!(
            d,
            ManagerDecision::Continue {
                plan: "p".into(),
                subtask: Subtask {
                    description: "Open Maps".into(),
                    app: Some("Maps".into())
                }
            }
        );
        let home = parse_manager("PLAN: p\nSUBTASK: go home\nAPP: None", &apps()).unwrap();
        assert!(matches!(home, ManagerDecision::Continue { subtask, .. } if subtask.app.is_none()));
        assert!(matches!(
            parse_manager("PLAN: p\nAPP: Maps", &apps()),
            Err(AgentError::ResponseFormat { .. })
        ));
        assert!(parse_manager("PLAN: p\nSUBTASK: x\nAPP: Chess", &apps()).is_err());
        assert_eq!(
            parse_manager("SUBTASK: DONE", &apps()).unwrap(),
            ManagerDecision::Done { plan: None }
        );
    }

    #[test]
    fn operator_parsing() {
        assert_eq!(
            parse_operator("Action: Tap at {\"x\": 404, \"y\": 260}").unwrap(),
            Action::Tap { x: 404, y: 260 }
        );
        assert_eq!(parse_operator("ACTION: Wait at null").unwrap(), Action::Wait);
        assert!(matches!(parse_operator("ACTION: Tapp at {"), Err(AgentError::Parse(_))));
    }

    #[test]
    fn reflection_parsing() {
        let r = parse_reflection("OUTCOME: A\nPROGRESS: opened maps", "").unwrap();
        assert_eq!(r.outcome, OutcomeLabel::Success);
        assert_eq!(r.feedback, "");
        let r = parse_reflection("OUTCOME: C\nFEEDBACK: nothing happened", "old").unwrap();
        assert_eq!((r.outcome, r.progress.as_str()), (OutcomeLabel::FailedNoChange, "old"));
        assert!(parse_reflection("OUTCOME: D\nFEEDBACK: x", "").is_err());
        assert!(parse_reflection("OUTCOME: B", "").is_err());
    }

    #[test]
    fn notes_replacement_and_sentinel() {
        assert_eq!(parse_notes("NOTES: RAMEN-SAN rating 4.6", "old"), "RAMEN-SAN rating 4.6");
        assert_eq!(parse_notes("NOTES: <unchanged>", "old"), "old");
        assert_eq!(parse_notes("NOTES: first", ""), "first");
        assert_eq!(parse_notes("just text", "old"), "just text");
    }

    #[test]
    fn step_functions_call_provider() {
        let p = ScriptedProvider::new(vec![ScriptStep {
            matcher: "hello".into(),
            response: "ACTION: Back at null".into(),
        }]);
        let req = ModelRequest::new(Role::Operator, "s".into(), vec![UserPart::text("hello")]);
        let (action, resp) = operator_step(&p, &req);
        assert_eq!(action.unwrap(), Action::Back);
        assert_eq!(resp.unwrap().output_tokens, 4);
        let (err, resp) = operator_step(&p, &req);
        assert!(matches!(err, Err(AgentError::Provider(_))) && resp.is_none());
    }
}
