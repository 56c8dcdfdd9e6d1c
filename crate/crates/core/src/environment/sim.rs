use std::sync::Arc;

use super::{DeviceBackend, DeviceState, EnvError, ExecReport, Perceptor, Scenario, SimStep};
use crate::model::{
    Action, ElementKind, IconElement, PerceptionResult, ScreenPayload, Screenshot, TextElement,
};

/// Pure transition: next state, its screenshot, and what happened.
pub fn sim_execute(
    scenario: &Scenario,
    state: &DeviceState,
    action: &Action,
) -> (DeviceState, Screenshot, SimStep) {
    let (next, step) = scenario.step(state, action);
    let shot = scenario.render(&next);
    (next, shot, step)
}

/// Scenario-driven device.
#[derive(Debug, Clone)]
pub struct SimDevice {
    scenario: Arc<Scenario>,
    state: DeviceState,
    visited: Vec<String>,
}

impl SimDevice {
    pub fn new(scenario: Arc<Scenario>) -> Self {
        let state = scenario.initial_state();
        let visited = vec![state.current.clone()];
        Self {
            scenario,
            state,
            visited,
        }
    }

    pub fn state(&self) -> &DeviceState {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Every screen shown so far, in order, with repeats.
    pub fn visited(&self) -> &[String] {
        &self.visited
    }
}

impl DeviceBackend for SimDevice {
    fn describe(&self) -> String {
        format!("sim:{}", self.scenario.name)
    }

    fn apps(&self) -> Vec<String> {
        self.scenario.app_names()
    }

    fn capture(&mut self) -> Result<Screenshot, EnvError> {
        Ok(self.scenario.render(&self.state))
    }

    fn execute(&mut self, action: &Action) -> Result<ExecReport, EnvError> {
        let before = self.state.current.clone();
        let (next, step) = self.scenario.step(&self.state, action);
        self.state = next;
        if self.state.current != before {
            self.visited.push(self.state.current.clone());
        }
        Ok(ExecReport {
            changed: Some(step.changed),
            screen_before: Some(before),
            screen_after: Some(self.state.current.clone()),
            oracle: Some(step.oracle),
        })
    }
}

/// Reads elements straight out of synthetic screenshots, ordered by id.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimPerceptor;

impl Perceptor for SimPerceptor {
    fn perceive(&self, shot: &Screenshot) -> Result<PerceptionResult, EnvError> {
        let ScreenPayload::Synthetic(screen) = &shot.payload else {
            return Err(EnvError::Perception(
                "the simulator perceptor reads synthetic screenshots only".into(),
            ));
        };
        let mut elements: Vec<_> = screen.elements.iter().collect();
        elements.sort_by(|a, b| a.id.cmp(&b.id));
        let mut out = PerceptionResult::default();
        for el in elements {
            match el.kind {
                ElementKind::Icon => out.icons.push(IconElement {
                    bbox: el.bbox,
                    caption: el.text.clone(),
                }),
                ElementKind::Text | ElementKind::Input => out.texts.push(TextElement {
                    text: el.text.clone(),
                    bbox: el.bbox,
                }),
            }
        }
        Ok(out)
    }
}

/// Perceives nothing. Stands in on real devices until an OCR and icon
/// captioning model is plugged in through [`Perceptor`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BlankPerceptor;

impl Perceptor for BlankPerceptor {
    fn perceive(&self, _shot: &Screenshot) -> Result<PerceptionResult, EnvError> {
        Ok(PerceptionResult::default())
    }
}

#[cfg(test)]
mod tests {
    use super::super::scenario::tests::small;
    use super::*;
    use crate::model::OutcomeLabel;

    #[test]
    fn device_tracks_visits_and_oracle() {
        let mut dev = SimDevice::new(Arc::new(small()));
        assert_eq!(dev.apps(), ["Maps"]);
        let r = dev
            .execute(&Action::OpenApp {
                app_name: "Maps".into(),
            })
            .unwrap();
        assert_eq!(r.changed, Some(true));
        assert_eq!(r.oracle, Some(OutcomeLabel::Success));
        let r = dev.execute(&Action::Wait).unwrap();
        assert_eq!(r.oracle, Some(OutcomeLabel::FailedNoChange));
        assert_eq!(dev.visited(), ["home", "maps_main"]);
    }

    #[test]
    fn pure_step_matches_device() {
        let s = small();
        let a = Action::OpenApp {
            app_name: "Maps".into(),
        };
        let (state, shot, _) = sim_execute(&s, &s.initial_state(), &a);
        let mut dev = SimDevice::new(Arc::new(s));
        dev.execute(&a).unwrap();
        assert_eq!(dev.state(), &state);
        assert_eq!(dev.capture().unwrap(), shot);
    }

    #[test]
    fn perception_is_sorted_and_within_screen() {
        let s = small();
        let (_, shot, _) = sim_execute(
            &s,
            &s.initial_state(),
            &Action::OpenApp {
                app_name: "Maps".into(),
            },
        );
        let p = SimPerceptor.perceive(&shot).unwrap();
        assert!(p.is_within(shot.width, shot.height));
        let captions: Vec<_> = p.icons.iter().map(|i| i.caption.as_str()).collect();
        assert_eq!(captions, ["map", "pin"]);
        assert_eq!(p.texts[0].text, "Search here");
        let png = Screenshot {
            width: 1,
            height: 1,
            source: "x".into(),
            payload: ScreenPayload::Png { data: vec![] },
        };
        assert!(SimPerceptor.perceive(&png).is_err());
        assert!(BlankPerceptor.perceive(&png).unwrap().is_empty());
    }
}
