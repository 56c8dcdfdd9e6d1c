//! Operator KB curation: every staged entry is accepted, rejected or edited.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::KbError;
use crate::model::{parse_action, Action};
use crate::retrieval::{write_jsonl, KbLayout, OperatorDoc};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    /// Keeps the entry with the given fields replaced.
    Edit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subtask: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<Action>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationDecision {
    pub id: u64,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CurationSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub edited: usize,
    pub per_app: BTreeMap<String, usize>,
    pub deleted_screenshots: Vec<PathBuf>,
}

/// Reads decisions JSONL. A missing file reads as no decisions.
pub fn read_decisions(path: &Path) -> Result<Vec<CurationDecision>, KbError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| KbError::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Appends one decision, so an interrupted session can resume.
pub fn write_decision(path: &Path, decision: &CurationDecision) -> Result<(), KbError> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| KbError::io(path, e))?;
    let line = serde_json::to_string(decision).expect("decision serializes");
    writeln!(file, "{line}").map_err(|e| KbError::io(path, e))
}

fn index_decisions(
    staged: &[OperatorDoc],
    decisions: &[CurationDecision],
) -> Result<BTreeMap<u64, Verdict>, KbError> {
    let ids: BTreeSet<u64> = staged.iter().map(|d| d.id).collect();
    let mut by_id = BTreeMap::new();
    for d in decisions {
        if !ids.contains(&d.id) {
            return Err(KbError::UnknownEntry(d.id));
        }
        if by_id.insert(d.id, d.verdict.clone()).is_some() {
            return Err(KbError::DuplicateDecision(d.id));
        }
    }
    if let Some(missing) = ids.iter().find(|id| !by_id.contains_key(id)) {
        return Err(KbError::UncoveredEntry(*missing));
    }
    Ok(by_id)
}

/// Applies `decisions` to the entries staged under `staging` and writes the
/// kept docs as a per-app operator KB under `out`. Nothing is written unless
/// every staged entry has exactly one decision. Screenshots of rejected
/// entries are removed from staging unless a kept entry uses them.
pub fn curate(
    staging: &Path,
    staged: &[OperatorDoc],
    decisions: &[CurationDecision],
    out: &Path,
) -> Result<CurationSummary, KbError> {
    let verdicts = index_decisions(staged, decisions)?;
    let mut summary = CurationSummary::default();
    let mut kept: BTreeMap<String, Vec<OperatorDoc>> = BTreeMap::new();
    let mut dropped = Vec::new();
    for doc in staged {
        match &verdicts[&doc.id] {
            Verdict::Reject => {
                summary.rejected += 1;
                dropped.push(doc.screenshot.clone());
                continue;
            }
            Verdict::Accept => {
                summary.accepted += 1;
                kept.entry(doc.app.clone()).or_default().push(doc.clone());
            }
            Verdict::Edit { subtask, action } => {
                summary.edited += 1;
                let mut doc = doc.clone();
                if let Some(s) = subtask {
                    doc.subtask = s.clone();
                }
                if let Some(a) = action {
                    doc.action = a.clone();
                }
                kept.entry(doc.app.clone()).or_default().push(doc);
            }
        }
    }

    let layout = KbLayout::new(out);
    let mut used = BTreeSet::new();
    for (app, docs) in &kept {
        for doc in docs {
            if used.insert(doc.screenshot.clone()) {
                let (from, to) = (staging.join(&doc.screenshot), layout.resolve(&doc.screenshot));
                if from != to {
                    let dir = to.parent().expect("has parent");
                    fs::create_dir_all(dir).map_err(|e| KbError::io(dir, e))?;
                    fs::copy(&from, &to).map_err(|e| KbError::io(&from, e))?;
                }
            }
        }
        write_jsonl(&layout.operator_file(app), docs)?;
        summary.per_app.insert(app.clone(), docs.len());
    }
    for shot in dropped {
        let path = staging.join(&shot);
        if !used.contains(&shot) && path.exists() {
            fs::remove_file(&path).map_err(|e| KbError::io(&path, e))?;
            summary.deleted_screenshots.push(shot);
        }
    }
    Ok(summary)
}

/// Asks for a verdict on each entry without one, appending answers to
/// `decisions_path`. Returns all decisions; stops early on `q` or EOF.
pub fn curate_interactive(
    staged: &[OperatorDoc],
    decisions_path: &Path,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<Vec<CurationDecision>, KbError> {
    let mut decisions = read_decisions(decisions_path)?;
    let decided: BTreeSet<u64> = decisions.iter().map(|d| d.id).collect();
    let io = |e| KbError::io(decisions_path, e);
    for doc in staged.iter().filter(|d| !decided.contains(&d.id)) {
        writeln!(
            output,
            "\n[{}] {} | {}\n    screenshot: {}\n    action: {}",
            doc.id,
            doc.app,
            doc.subtask,
            doc.screenshot.display(),
            doc.action
        )
        .map_err(io)?;
        let verdict = loop {
            write!(output, "accept (a), reject (r), edit action (e <action>), quit (q): ").map_err(io)?;
            output.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                return Ok(decisions);
            }
            let line = line.trim();
            match line.split_once(' ').map_or((line, ""), |(c, rest)| (c, rest.trim())) {
                ("a", _) => break Verdict::Accept,
                ("r", _) => break Verdict::Reject,
                ("q", _) => return Ok(decisions),
                ("e", text) => match parse_action(text) {
                    Ok(action) => {
                        break Verdict::Edit {
                            subtask: None,
                            action: Some(action),
                        }
                    }
                    Err(e) => writeln!(output, "    invalid action: {e}").map_err(io)?,
                },
                _ => writeln!(output, "    unrecognized answer").map_err(io)?,
            }
        };
        let decision = CurationDecision { id: doc.id, verdict };
        write_decision(decisions_path, &decision)?;
        decisions.push(decision);
    }
    Ok(decisions)
}
