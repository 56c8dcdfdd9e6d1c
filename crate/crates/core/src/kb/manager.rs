use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;

use super::KbError;
use crate::retrieval::ManagerDoc;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ManagerSource {
    pub instruction: String,
    pub human_steps: String,
}

/// Reads `instruction<TAB>human steps` lines, or a JSON array of
/// `{"instruction", "human_steps"}` when the file is `.json`.
pub fn parse_manager_source(path: &Path) -> Result<Vec<ManagerSource>, KbError> {
    let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
    let format_err = |reason: String| KbError::Format {
        path: path.to_path_buf(),
        reason,
    };
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str(&text).map_err(|e| format_err(e.to_string()));
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let (instruction, steps) = line
                .split_once('\t')
                .ok_or_else(|| format_err(format!("line {}: expected a tab separator", i + 1)))?;
            Ok(ManagerSource {
                instruction: instruction.to_string(),
                human_steps: steps.to_string(),
            })
        })
        .collect()
}

/// Manager docs with ids 1..=n. Fields are trimmed; steps stay free text.
pub fn build_manager_kb(sources: &[ManagerSource]) -> Result<Vec<ManagerDoc>, KbError> {
    let mut seen = BTreeSet::new();
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let instruction = s.instruction.trim();
            let steps = s.human_steps.trim();
            if instruction.is_empty() {
                return Err(KbError::EmptyField { index: i, field: "instruction" });
            }
            if steps.is_empty() {
                return Err(KbError::EmptyField { index: i, field: "human_steps" });
            }
            if !seen.insert(instruction.to_string()) {
                return Err(KbError::DuplicateInstruction(instruction.into()));
            }
            Ok(ManagerDoc {
                id: i as u64 + 1,
                instruction: instruction.into(),
                human_steps: steps.into(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src(i: &str, s: &str) -> ManagerSource {
        ManagerSource {
            instruction: i.into(),
            human_steps: s.into(),
        }
    }

    #[test]
    fn sequential_ids_and_rejections() {
        let docs = build_manager_kb(&(0..50).map(|i| src(&format!("task {i}"), "steps")).collect::<Vec<_>>()).unwrap();
        assert_eq!(docs.len(), 50);
        assert_eq!((docs[0].id, docs[49].id), (1, 50));
        assert!(matches!(
            build_manager_kb(&[src("a", "x"), src("a ", "y")]),
            Err(KbError::DuplicateInstruction(_))
        ));
        assert!(matches!(
            build_manager_kb(&[src("a", "  ")]),
            Err(KbError::EmptyField { field: "human_steps", .. })
        ));
    }

    #[test]
    fn tsv_and_json_sources() {
        let dir = tempfile::tempdir().unwrap();
        let tsv = dir.path().join("m.tsv");
        std::fs::write(&tsv, "Find ramen\topen Maps app, tap on the search bar\n\n").unwrap();
        assert_eq!(parse_manager_source(&tsv).unwrap().len(), 1);
        let bad = dir.path().join("bad.tsv");
        std::fs::write(&bad, "no tab here\n").unwrap();
        assert!(parse_manager_source(&bad).is_err());
        let json = dir.path().join("m.json");
        std::fs::write(&json, r#"[{"instruction": "a", "human_steps": "b"}]"#).unwrap();
        assert_eq!(parse_manager_source(&json).unwrap(), [src("a", "b")]);
    }
}
