//! Prompt assembly for the four roles.

use std::fmt::Write as _;

use super::request::{ModelRequest, Role, UserPart};
use crate::model::{
    Action, ActionLogEntry, ErrorLogEntry, PerceptionResult, Screenshot, Subtask, TaskInstruction,
    WorkingMemory,
};
use crate::retrieval::{ManagerDoc, OperatorDoc};

/// Initial tips shared by every role's system prompt.
pub const INITIAL_TIPS: [&str; 4] = [
    "Do not add any payment information. If you are asked to sign in, ignore it or sign in as a guest if possible. Close any pop-up windows when opening an app.",
    "By default, no APPs are opened in the background.",
    "Screenshots may show partial text in text boxes from your previous input; this does not count as an error.",
    "When creating new Notes, you do not need to enter a title unless the user specifically requests it.",
];

pub const DEFAULT_K_ERR: usize = 3;
pub const DEFAULT_K_LOG: usize = 5;

/// Section headers. Tests and scripts match on these.
pub const EXEMPLAR_HEADER: &str = "### Retrieved Examples";
pub const ERROR_HEADER: &str = "### Recent Errors";
pub const PERCEPTION_HEADER: &str = "### Screen Elements";
pub const OPERATOR_EXEMPLAR_HEADER: &str = "### Retrieved Example";
pub const ACTION_LOG_HEADER: &str = "### Recent Actions";

const ACTION_SPACE: &str = "\
- Open_App at {\"app_name\": str}: open an app from the Home screen.
- Tap at {\"x\": int, \"y\": int}: tap the screen at (x, y).
- Swipe at {\"x1\": int, \"y1\": int, \"x2\": int, \"y2\": int}: swipe from (x1, y1) to (x2, y2).
- Type at {\"text\": str}: type into the focused input box.
- Enter at null: press Enter.
- Back at null: go back.
- Home at null: go to the Home screen.
- Wait at null: wait 10 seconds for the page to load.
- Tap_Type_and_Enter at {\"x\": int, \"y\": int, \"text\": str}: tap an input box, type the text, press Enter.";

fn system_text(role_intro: &str, response_format: &str) -> String {
    let mut s = String::new();
    s.push_str(role_intro);
    s.push_str("\n\nTips:\n");
    for (i, tip) in INITIAL_TIPS.iter().enumerate() {
        let _ = writeln!(s, "{}. {tip}", i + 1);
    }
    s.push_str("\nRespond in exactly this format:\n");
    s.push_str(response_format);
    s
}

fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        "(none)"
    } else {
        text
    }
}

fn subtask_line(subtask: Option<&Subtask>) -> String {
    match subtask {
        Some(s) => format!("{} (app: {})", s.description, s.app_label()),
        None => "(none)".into(),
    }
}

fn render_errors(out: &mut String, errors: &[ErrorLogEntry]) {
    out.push_str(ERROR_HEADER);
    for e in errors {
        let _ = write!(out, "\nStep {}: {}\nFeedback: {}", e.step, e.action, e.feedback);
    }
}

fn render_actions(out: &mut String, actions: &[ActionLogEntry]) {
    out.push_str(ACTION_LOG_HEADER);
    if actions.is_empty() {
        out.push_str("\n(none)");
    }
    for a in actions {
        let _ = write!(out, "\nStep {}: {} -> {}", a.step, a.action, a.outcome.code());
    }
}

fn render_perception(out: &mut String, perception: &PerceptionResult) {
    out.push_str(PERCEPTION_HEADER);
    if perception.is_empty() {
        out.push_str("\n(none detected)");
    }
    for line in perception.lines() {
        out.push('\n');
        out.push_str(&line);
    }
}

pub struct ManagerPrompt<'a> {
    pub instruction: &'a TaskInstruction,
    pub memory: &'a WorkingMemory,
    pub screenshot: &'a Screenshot,
    /// Retrieved exemplars; only read at the first step.
    pub exemplars: &'a [ManagerDoc],
    pub apps: &'a [String],
    pub k_err: usize,
}

/// Manager prompt. First step: task plus exemplars. Later steps: previous
/// plan, subtask, progress and notes, with the error-log tail appended last
/// when the error flag is set. Perception is never included.
pub fn prompt_gen_manager(p: &ManagerPrompt<'_>) -> ModelRequest {
    let system = system_text(
        "You are the Manager of an agent that operates an Android phone for the user. \
         You make the overall plan and pick the next subtask. You do not perform actions yourself.",
        "PLAN: <the overall plan>\n\
         SUBTASK: <the next subtask, or DONE when the whole task is finished>\n\
         APP: <the app the subtask happens in, or None for the Home screen>",
    );
    let mem = p.memory;
    let mut head = format!("### Task\n{}", p.instruction);
    let _ = write!(head, "\n\n### Installed Apps\n{}", p.apps.join(", "));
    let first = mem.step <= 1;
    if first {
        if !p.exemplars.is_empty() {
            let _ = write!(head, "\n\n{EXEMPLAR_HEADER}");
            for (i, doc) in p.exemplars.iter().enumerate() {
                let _ = write!(
                    head,
                    "\nExample {}\nInstruction: {}\nHuman Steps: {}",
                    i + 1,
                    doc.instruction,
                    doc.human_steps
                );
            }
        }
    } else {
        let _ = write!(
            head,
            "\n\n### Overall Plan\n{}\n\n### Previous Subtask\n{}\n\n### Progress\n{}\n\n### Notes\n{}",
            or_none(&mem.plan),
            subtask_line(mem.subtask.as_ref()),
            or_none(&mem.progress),
            or_none(&mem.notes),
        );
    }
    head.push_str("\n\n### Current Screenshot");
    let mut tail = String::from(if first {
        "Make an overall plan for the task and give the first subtask."
    } else if mem.error_flag {
        "The last actions failed. Revise the plan if needed and give the next subtask."
    } else {
        "Update the plan if needed and give the next subtask."
    });
    if !first && mem.error_flag {
        tail.push_str("\n\n");
        render_errors(&mut tail, mem.recent_errors(p.k_err));
    }
    ModelRequest::new(
        Role::Manager,
        system,
        vec![
            UserPart::text(head),
            UserPart::image("current", p.screenshot),
            UserPart::text(tail),
        ],
    )
}

pub struct OperatorPrompt<'a> {
    pub instruction: &'a TaskInstruction,
    pub memory: &'a WorkingMemory,
    pub screenshot: &'a Screenshot,
    pub perception: &'a PerceptionResult,
    /// Best exemplar from the subtask's app library, with its screenshot.
    pub exemplar: Option<(&'a OperatorDoc, &'a Screenshot)>,
    pub k_log: usize,
}

/// Operator prompt: always carries perception, the action and error log
/// tails, and the notes; carries the exemplar and its reference screenshot
/// when one was retrieved.
pub fn prompt_gen_operator(p: &OperatorPrompt<'_>) -> ModelRequest {
    let system = system_text(
        &format!(
            "You are the Operator of an agent that operates an Android phone for the user. \
             You turn the current subtask into exactly one action.\n\nActions:\n{ACTION_SPACE}"
        ),
        "ACTION: <Name> at <JSON arguments or null>",
    );
    let mem = p.memory;
    let (desc, app) = match &mem.subtask {
        Some(s) => (s.description.as_str(), s.app_label()),
        None => ("(none)", "None"),
    };
    let mut text = format!(
        "### Task\n{}\n\n### Overall Plan\n{}\n\nCurrent Subtask: {desc}\nApp: {app}\n\n### Progress\n{}\n\n### Notes\n{}\n\n",
        p.instruction,
        or_none(&mem.plan),
        or_none(&mem.progress),
        or_none(&mem.notes),
    );
    render_perception(&mut text, p.perception);
    text.push_str("\n\n");
    render_actions(&mut text, mem.recent_actions(p.k_log));
    let errors = mem.recent_errors(p.k_log);
    if !errors.is_empty() {
        text.push_str("\n\n");
        render_errors(&mut text, errors);
    }
    let mut parts = Vec::new();
    if let Some((doc, reference)) = p.exemplar {
        let _ = write!(
            text,
            "\n\n{OPERATOR_EXEMPLAR_HEADER}\nSubtask: {}\nAction: {}\nReference Screenshot:",
            doc.subtask, doc.action
        );
        parts.push(UserPart::text(std::mem::take(&mut text)));
        parts.push(UserPart::image("reference", reference));
    } else {
        text.push_str("\n\n");
    }
    text.push_str("### Current Screenshot");
    parts.push(UserPart::text(text));
    parts.push(UserPart::image("current", p.screenshot));
    parts.push(UserPart::text(format!(
        "Screen size: {}x{}. Give the single next action for the current subtask.",
        p.screenshot.width, p.screenshot.height
    )));
    ModelRequest::new(Role::Operator, system, parts)
}

pub struct ReflectPrompt<'a> {
    pub instruction: &'a TaskInstruction,
    pub subtask: Option<&'a Subtask>,
    pub action: &'a Action,
    pub before: &'a Screenshot,
    pub after: &'a Screenshot,
    pub perception_before: &'a PerceptionResult,
    pub perception_after: &'a PerceptionResult,
    pub progress: &'a str,
}

/// Lines present after but not before, and before but not after.
pub fn perception_diff(before: &PerceptionResult, after: &PerceptionResult) -> (Vec<String>, Vec<String>) {
    let b = before.lines();
    let a = after.lines();
    let added = a.iter().filter(|l| !b.contains(l)).cloned().collect();
    let removed = b.iter().filter(|l| !a.contains(l)).cloned().collect();
    (added, removed)
}

pub fn prompt_gen_reflector(p: &ReflectPrompt<'_>) -> ModelRequest {
    let system = system_text(
        "You are the Action Reflector of an agent that operates an Android phone for the user. \
         You compare the screen before and after the last action and judge its outcome.",
        "OUTCOME: <A if the action succeeded, B if it led to a wrong page, C if nothing changed>\n\
         PROGRESS: <updated progress towards the task>\n\
         FEEDBACK: <why the action failed; empty when OUTCOME is A>",
    );
    let (added, removed) = perception_diff(p.perception_before, p.perception_after);
    let mut diff = String::from("### Elements Added");
    for l in &added {
        diff.push('\n');
        diff.push_str(l);
    }
    diff.push_str("\n\n### Elements Removed");
    for l in &removed {
        diff.push('\n');
        diff.push_str(l);
    }
    if added.is_empty() && removed.is_empty() {
        diff.push_str("\n(no element changed)");
    }
    let head = format!(
        "### Task\n{}\n\n### Subtask\n{}\n\n### Action Taken\n{}\n\n### Progress So Far\n{}\n\n### Screenshot Before",
        p.instruction,
        subtask_line(p.subtask),
        p.action,
        or_none(p.progress),
    );
    let mut before = String::new();
    render_perception(&mut before, p.perception_before);
    before.push_str("\n\n### Screenshot After");
    let mut after = String::new();
    render_perception(&mut after, p.perception_after);
    let _ = write!(after, "\n\n{diff}");
    ModelRequest::new(
        Role::Reflector,
        system,
        vec![
            UserPart::text(head),
            UserPart::image("before", p.before),
            UserPart::text(before),
            UserPart::image("after", p.after),
            UserPart::text(after),
        ],
    )
}

pub struct NotePrompt<'a> {
    pub instruction: &'a TaskInstruction,
    pub plan: &'a str,
    pub subtask: Option<&'a Subtask>,
    pub screenshot: &'a Screenshot,
    pub perception: &'a PerceptionResult,
    pub progress: &'a str,
    pub notes: &'a str,
}

pub fn prompt_gen_notetaker(p: &NotePrompt<'_>) -> ModelRequest {
    let system = system_text(
        "You are the Notetaker of an agent that operates an Android phone for the user. \
         You keep the facts the task will need later, such as names, ratings and numbers.",
        "NOTES: <the complete updated notes, or <unchanged> to keep the current notes>",
    );
    let mut text = format!(
        "### Task\n{}\n\n### Overall Plan\n{}\n\n### Subtask\n{}\n\n### Progress\n{}\n\n### Current Notes\n{}\n\n",
        p.instruction,
        or_none(p.plan),
        subtask_line(p.subtask),
        or_none(p.progress),
        or_none(p.notes),
    );
    render_perception(&mut text, p.perception);
    text.push_str("\n\n### Current Screenshot");
    ModelRequest::new(
        Role::Notetaker,
        system,
        vec![UserPart::text(text), UserPart::image("current", p.screenshot)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, OutcomeLabel, TextElement};

    fn instruction() -> TaskInstruction {
        TaskInstruction::new("Find a ramen place in Chicago Loop and note it").unwrap()
    }

    fn exemplars() -> Vec<ManagerDoc> {
        (1..=3)
            .map(|i| ManagerDoc {
                id: i,
                instruction: format!("instruction {i}"),
                human_steps: format!("human steps {i}"),
            })
            .collect()
    }

    fn perception() -> PerceptionResult {
        PerceptionResult {
            texts: vec![TextElement {
                text: "Search here".into(),
                bbox: BBox::new(90, 230, 720, 290),
            }],
            icons: vec![],
        }
    }

    fn memory_with_errors(step: u32, flag: bool, errors: usize) -> WorkingMemory {
        let mut m = WorkingMemory::new();
        m.plan = "the plan".into();
        m.progress = "some progress".into();
        m.notes = "a note".into();
        m.subtask = Some(Subtask {
            description: "Tap the search bar.".into(),
            app: Some("Maps".into()),
        });
        for i in 0..errors {
            m.step = i as u32 + 1;
            m.record_outcome(Action::Tap { x: i as u32, y: 1 }, OutcomeLabel::FailedNoChange, &format!("error {}", i + 1))
                .unwrap();
        }
        m.step = step;
        m.error_flag = flag;
        m
    }

    fn manager(mem: &WorkingMemory, shot: &Screenshot, ex: &[ManagerDoc]) -> ModelRequest {
        let apps = vec!["Maps".to_string(), "Notes".to_string()];
        prompt_gen_manager(&ManagerPrompt {
            instruction: &instruction(),
            memory: mem,
            screenshot: shot,
            exemplars: ex,
            apps: &apps,
            k_err: 3,
        })
    }

    #[test]
    fn manager_first_step_has_exemplars() {
        let shot = Screenshot::synthetic("home", 1260, 2800);
        let req = manager(&WorkingMemory::new(), &shot, &exemplars());
        let flat = req.flattened_text();
        for i in 1..=3 {
            assert!(flat.contains(&format!("Human Steps: human steps {i}")));
        }
        assert!(!flat.contains(ERROR_HEADER));
        assert!(!flat.contains(PERCEPTION_HEADER));
        for tip in INITIAL_TIPS {
            assert!(req.system_text.contains(tip));
        }
        assert_eq!(req.images().count(), 1);
    }

    #[test]
    fn manager_later_steps_split_on_error_flag() {
        let shot = Screenshot::synthetic("home", 1260, 2800);
        let mem = memory_with_errors(4, false, 5);
        let flat = manager(&mem, &shot, &exemplars()).flattened_text();
        assert!(!flat.contains(EXEMPLAR_HEADER) && !flat.contains("human steps"));
        assert!(!flat.contains(ERROR_HEADER));
        for needle in ["the plan", "Tap the search bar.", "some progress", "a note"] {
            assert!(flat.contains(needle), "{needle}");
        }

        let mem = memory_with_errors(4, true, 5);
        let req = manager(&mem, &shot, &exemplars());
        let flat = req.flattened_text();
        assert!(!flat.contains(EXEMPLAR_HEADER));
        let expected_tail = "### Recent Errors\n\
             Step 3: Tap at {\"x\": 2, \"y\": 1}\nFeedback: error 3\n\
             Step 4: Tap at {\"x\": 3, \"y\": 1}\nFeedback: error 4\n\
             Step 5: Tap at {\"x\": 4, \"y\": 1}\nFeedback: error 5";
        assert!(flat.ends_with(expected_tail), "{flat}");
        assert!(!flat.contains("error 2"));
    }

    fn operator(mem: &WorkingMemory, exemplar: Option<(&OperatorDoc, &Screenshot)>) -> ModelRequest {
        let shot = Screenshot::synthetic("maps_main", 1260, 2800);
        prompt_gen_operator(&OperatorPrompt {
            instruction: &instruction(),
            memory: mem,
            screenshot: &shot,
            perception: &perception(),
            exemplar,
            k_log: 5,
        })
    }

    #[test]
    fn operator_with_and_without_exemplar() {
        let mem = memory_with_errors(2, false, 0);
        let doc = OperatorDoc {
            id: 7,
            app: "Maps".into(),
            subtask: "Tap the search bar.".into(),
            screenshot: "screenshots/ref.json".into(),
            action: Action::Tap { x: 404, y: 260 },
        };
        let reference = Screenshot::synthetic("maps_ref", 1260, 2800);
        let with = operator(&mem, Some((&doc, &reference)));
        let flat = with.flattened_text();
        assert!(flat.contains("Current Subtask: Tap the search bar."));
        assert!(flat.contains("Action: Tap at {\"x\": 404, \"y\": 260}"));
        assert!(flat.contains("text \"Search here\" at [90, 230, 720, 290]"));
        let labels: Vec<_> = with.images().map(|(l, _)| l).collect();
        assert_eq!(labels, ["reference", "current"]);

        let without = operator(&mem, None);
        assert_eq!(without.images().count(), 1);
        assert!(!without.flattened_text().contains(OPERATOR_EXEMPLAR_HEADER));
    }

    #[test]
    fn operator_shows_log_tails() {
        let mut mem = memory_with_errors(1, false, 0);
        for i in 1..=10u32 {
            mem.step = i;
            mem.record_outcome(Action::Tap { x: i, y: i }, OutcomeLabel::Success, "").unwrap();
        }
        let flat = operator(&mem, None).flattened_text();
        assert!(!flat.contains("Step 5: Tap"));
        for i in 6..=10 {
            assert!(flat.contains(&format!("Step {i}: Tap at {{\"x\": {i}, \"y\": {i}}} -> A")));
        }
    }

    #[test]
    fn reflector_and_notetaker_include_both_views() {
        let before = Screenshot::synthetic("a", 1260, 2800);
        let after = Screenshot::synthetic("b", 1260, 2800);
        let empty = PerceptionResult::default();
        let req = prompt_gen_reflector(&ReflectPrompt {
            instruction: &instruction(),
            subtask: None,
            action: &Action::Back,
            before: &before,
            after: &after,
            perception_before: &perception(),
            perception_after: &empty,
            progress: "",
        });
        let flat = req.flattened_text();
        assert!(flat.contains("### Elements Removed\ntext \"Search here\""));
        assert_eq!(req.images().count(), 2);
        let note = prompt_gen_notetaker(&NotePrompt {
            instruction: &instruction(),
            plan: "p",
            subtask: None,
            screenshot: &after,
            perception: &empty,
            progress: "g",
            notes: "",
        });
        assert!(note.flattened_text().contains("### Current Notes\n(none)"));
    }

    #[test]
    fn prompts_are_deterministic() {
        let shot = Screenshot::synthetic("home", 1260, 2800);
        let mem = memory_with_errors(3, true, 4);
        assert_eq!(manager(&mem, &shot, &[]).digest(), manager(&mem, &shot, &[]).digest());
    }
}
