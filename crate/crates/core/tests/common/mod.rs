#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use mar_core::agents::ScriptedProvider;
use mar_core::environment::{Scenario, SimDevice, SimPerceptor};
use mar_core::model::TaskInstruction;
use mar_core::orchestrator::{run_task, RunConfig, RunContext, Trajectory};
use mar_core::retrieval::{load_knowledge_base, FallbackEmbedder, KnowledgeBase};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn ramen_task() -> TaskInstruction {
    let text = std::fs::read_to_string(fixture("ramen/task.txt")).unwrap();
    TaskInstruction::new(text.trim()).unwrap()
}

pub fn ramen_scenario() -> Arc<Scenario> {
    Arc::new(Scenario::load(&fixture("ramen/scenario.json")).unwrap())
}

pub fn fixture_kb() -> Arc<KnowledgeBase> {
    Arc::new(load_knowledge_base(&fixture("kb"), Arc::new(FallbackEmbedder)).unwrap())
}

/// One scripted run of the ramen flow on the simulator.
pub fn run_ramen() -> (Trajectory, SimDevice) {
    let scenario = ramen_scenario();
    let mut device = SimDevice::new(scenario);
    let ctx = RunContext {
        provider: Arc::new(ScriptedProvider::load(&fixture("ramen/script.json")).unwrap()),
        kb: fixture_kb(),
        perceptor: Arc::new(SimPerceptor),
        config: RunConfig::default(),
    };
    let traj = run_task(&ramen_task(), Some("ramen".into()), &mut device, &ctx);
    (traj, device)
}

pub mod strategies {
    use mar_core::model::Action;
    use proptest::prelude::*;

    fn text() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-zA-Z0-9 ]{0,24}",
            any::<String>(),
            Just("quote \" backslash \\ newline \n tab \t".to_string()),
        ]
    }

    pub fn action() -> impl Strategy<Value = Action> {
        let c = any::<u32>();
        prop_oneof![
            "[A-Za-z][A-Za-z ]{0,15}".prop_map(|app_name| Action::OpenApp { app_name }),
            (c, c).prop_map(|(x, y)| Action::Tap { x, y }),
            (c, c, c, c)
                .prop_map(|(x1, y1, x2, y2)| Action::Swipe { x1, y1, x2, y2 }),
            text().prop_map(|text| Action::Type { text }),
            Just(Action::Enter),
            Just(Action::Back),
            Just(Action::Home),
            Just(Action::Wait),
            (c, c, text()).prop_map(|(x, y, text)| Action::TapTypeEnter { x, y, text }),
        ]
    }
}
