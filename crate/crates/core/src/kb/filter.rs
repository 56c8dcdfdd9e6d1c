use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::logging::RawTrace;
use super::{KbError, STAGED_FILE, TRACES_DIR};
use crate::retrieval::{write_jsonl, OperatorDoc};

/// Drops failed traces, keeps one trace per distinct action-name sequence
/// of a task, then keeps the shortest trace per task. Ties go to the
/// earliest input. Output follows input order.
pub fn filter_traces(traces: &[RawTrace]) -> Vec<RawTrace> {
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    let mut seen: Vec<(&str, Vec<&'static str>)> = Vec::new();
    for (i, trace) in traces.iter().enumerate() {
        if !trace.success {
            continue;
        }
        let key = (trace.task_id.as_str(), trace.action_names());
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        best.entry(&trace.task_id)
            .and_modify(|b| {
                if trace.len() < traces[*b].len() {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| traces[i].clone()).collect()
}

/// App-bound records of the kept traces as operator docs with ids from 1.
/// Home-screen records have no library and are skipped.
pub fn stage_entries(traces: &[RawTrace]) -> Vec<OperatorDoc> {
    traces
        .iter()
        .flat_map(|t| t.records.iter())
        .filter_map(|r| {
            Some(OperatorDoc {
                id: 0,
                app: r.app.clone()?,
                subtask: r.subtask.clone(),
                screenshot: r.screenshot.clone(),
                action: r.action.clone(),
            })
        })
        .enumerate()
        .map(|(i, mut d)| {
            d.id = i as u64 + 1;
            d
        })
        .collect()
}

/// Writes kept traces, their screenshots and `staged.jsonl` under `out`.
pub fn write_filtered(input: &Path, kept: &[RawTrace], out: &Path) -> Result<Vec<OperatorDoc>, KbError> {
    let traces_dir = out.join(TRACES_DIR);
    fs::create_dir_all(&traces_dir).map_err(|e| KbError::io(&traces_dir, e))?;
    for (i, trace) in kept.iter().enumerate() {
        let path = traces_dir.join(format!("{}-{i:04}.json", trace.task_id));
        let json = serde_json::to_string_pretty(trace).expect("trace serializes");
        fs::write(&path, json + "\n").map_err(|e| KbError::io(&path, e))?;
        for r in &trace.records {
            let (from, to) = (input.join(&r.screenshot), out.join(&r.screenshot));
            if from != to && !to.exists() {
                let dir = to.parent().expect("has parent");
                fs::create_dir_all(dir).map_err(|e| KbError::io(dir, e))?;
                fs::copy(&from, &to).map_err(|e| KbError::io(&from, e))?;
            }
        }
    }
    let staged = stage_entries(kept);
    write_jsonl(&out.join(STAGED_FILE), &staged)?;
    Ok(staged)
}
