mod common;

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use common::*;
use mar_core::evaluation::{evaluate_criteria, CompletionCriteria, CriterionItem};
use mar_core::kb::{curate, CurationDecision, KbError, Verdict};
use mar_core::model::{parse_action, Action};
use mar_core::orchestrator::update_error_flag;
use mar_core::retrieval::{cosine_similarity, operator_retrieve, Embedding, FallbackEmbedder, OperatorDoc, OperatorKbRegistry};
use proptest::prelude::*;

fn ramen_criteria() -> CompletionCriteria {
    CompletionCriteria::load(&fixture("ramen/criteria.json")).unwrap()
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1e3f64..1e3, 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn render_parse_round_trip(a in strategies::action()) {
        prop_assert_eq!(parse_action(&a.render()).unwrap(), a.clone());
        let padded = format!("  {}\n", a.render());
        prop_assert_eq!(parse_action(&padded).unwrap(), a);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(u in vector(), v in vector()) {
        let (u, v) = (Embedding::new(u), Embedding::new(v));
        let uv = cosine_similarity(&u, &v).unwrap();
        let vu = cosine_similarity(&v, &u).unwrap();
        prop_assert_eq!(uv, vu);
        prop_assert!((-1.0..=1.0).contains(&uv));
        if !u.is_zero() {
            prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_retrieval_stays_in_its_app(
        rows in proptest::collection::vec(("[a-z]{1,6}( [a-z]{1,6}){0,3}", 0usize..3), 1..40),
        query in "[a-z]{1,6}( [a-z]{1,6}){0,3}",
    ) {
        let apps = ["Maps", "Notes", "Booking"];
        let docs: Vec<OperatorDoc> = rows
            .iter()
            .enumerate()
            .map(|(i, (subtask, app))| OperatorDoc {
                id: i as u64 + 1,
                app: apps[*app].into(),
                subtask: subtask.clone(),
                screenshot: "screenshots/s.json".into(),
                action: Action::Back,
            })
            .collect();
        let registry = OperatorKbRegistry::build(docs, Arc::new(FallbackEmbedder)).unwrap();
        for app in apps {
            if let Some(hit) = operator_retrieve(&query, app, &registry).unwrap() {
                prop_assert_eq!(hit.doc.app, app);
            }
        }
        prop_assert!(operator_retrieve(&query, "Chess", &registry).unwrap().is_none());
    }

    #[test]
    fn cr_ignores_item_order(perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle(), drop_steps in 0usize..11) {
        let (mut traj, _) = run_ramen();
        traj.steps.truncate(11 - drop_steps);
        traj.visited_screens.retain(|s| traj.steps.iter().any(|st| st.screenshot_before.contains(s.as_str())) || s == "home");
        let criteria = ramen_criteria();
        let scenario = ramen_scenario();
        let base = evaluate_criteria(&traj, Some(&scenario), &criteria, None).unwrap();
        let shuffled = CompletionCriteria {
            task_id: criteria.task_id.clone(),
            items: perm.iter().map(|i| criteria.items[*i].clone()).collect::<Vec<CriterionItem>>(),
        };
        let other = evaluate_criteria(&traj, Some(&scenario), &shuffled, None).unwrap();
        prop_assert_eq!(base.completed, other.completed);
        for (j, i) in perm.iter().enumerate() {
            prop_assert_eq!(other.flags[j], base.flags[*i]);
        }
    }

    #[test]
    fn curation_requires_exactly_one_decision_per_entry(
        verdicts in proptest::collection::vec(proptest::option::of(0u8..3), 1..8),
        duplicate in proptest::option::of(0usize..8),
    ) {
        let staging = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let staged: Vec<OperatorDoc> = (0..verdicts.len())
            .map(|i| {
                let shot = PathBuf::from(format!("screenshots/{i}.json"));
                let path = staging.path().join(&shot);
                fs::create_dir_all(path.parent().unwrap()).unwrap();
                fs::write(&path, "{}").unwrap();
                OperatorDoc {
                    id: i as u64 + 1,
                    app: if i % 2 == 0 { "Maps".into() } else { "Notes".into() },
                    subtask: format!("s{i}"),
                    screenshot: shot,
                    action: Action::Tap { x: 1, y: i as u32 },
                }
            })
            .collect();
        let mut decisions: Vec<CurationDecision> = verdicts
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let verdict = match (*v)? {
                    0 => Verdict::Accept,
                    1 => Verdict::Reject,
                    _ => Verdict::Edit { subtask: Some("edited".into()), action: None },
                };
                Some(CurationDecision { id: i as u64 + 1, verdict })
            })
            .collect();
        let dup = duplicate.filter(|d| *d < decisions.len());
        if let Some(d) = dup {
            decisions.push(decisions[d].clone());
        }
        let result = curate(staging.path(), &staged, &decisions, out.path());
        let covered = verdicts.iter().all(Option::is_some);
        match result {
            Ok(summary) => {
                prop_assert!(covered && dup.is_none());
                let kept = verdicts.iter().filter(|v| **v != Some(1)).count();
                prop_assert_eq!(summary.per_app.values().sum::<usize>(), kept);
                prop_assert_eq!(summary.accepted + summary.rejected + summary.edited, staged.len());
            }
            Err(KbError::UncoveredEntry(_)) => prop_assert!(!covered),
            Err(KbError::DuplicateDecision(_)) => prop_assert!(dup.is_some()),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn stored_error_flags_match_recomputation() {
    let (traj, _) = run_ramen();
    let mut log = Vec::new();
    for step in &traj.steps {
        assert_eq!(step.error_flag, update_error_flag(&log), "step {}", step.step);
        if let (Some(action), Some(outcome)) = (&step.action, step.outcome) {
            log.push(mar_core::model::ActionLogEntry {
                step: step.step,
                action: action.clone(),
                outcome,
            });
        }
    }
}
