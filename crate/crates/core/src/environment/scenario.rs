//! Scenario files: a deterministic app-screen state machine.
//!
//! ```json
//! {
//!   "name": "ramen",
//!   "width": 1260, "height": 2800,
//!   "apps": [{"name": "Maps", "entry": "maps_main", "package": "com.google.android.apps.maps"}],
//!   "screens": [{"id": "home", "app": "home", "elements": [...]}],
//!   "initial_screen": "home",
//!   "transitions": [{"from": "maps_main", "on": {"action": "Tap", "element": "search_bar"},
//!                    "to": "maps_search", "effects": [{"focus": "search_input"}]}],
//!   "completion_items": [...],
//!   "oracle_outcomes": [{"screen": "maps_results", "on": {"action": "Tap", "element": "ad"},
//!                        "outcome": "B"}]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::evaluation::CriterionItem;
use crate::model::{
    Action, BBox, ElementKind, OutcomeLabel, ScreenElement, ScreenPayload, Screenshot,
    SyntheticScreen,
};

pub const HOME_SCREEN: &str = "home";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppDef {
    pub name: String,
    /// Screen shown right after the app is opened from home.
    pub entry: String,
    /// Android package, used by the wire backend's launcher intent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDef {
    pub id: String,
    #[serde(default)]
    pub text: String,
    pub bbox: BBox,
    pub kind: ElementKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenDef {
    pub id: String,
    /// Owning app name, or `home`.
    pub app: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default)]
    pub elements: Vec<ElementDef>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwipeDirection {
    Up,
    Down,
    Left,
    Right,
}

impl SwipeDirection {
    /// Direction of finger travel; ties between axes count as vertical.
    pub fn of(x1: u32, y1: u32, x2: u32, y2: u32) -> Option<Self> {
        let dx = i64::from(x2) - i64::from(x1);
        let dy = i64::from(y2) - i64::from(y1);
        if dx == 0 && dy == 0 {
            None
        } else if dy.abs() >= dx.abs() {
            Some(if dy < 0 { SwipeDirection::Up } else { SwipeDirection::Down })
        } else {
            Some(if dx < 0 { SwipeDirection::Left } else { SwipeDirection::Right })
        }
    }
}

/// Action name plus optional element hit test, text, or swipe direction.
///
/// `element` is hit-tested at the tap point (or swipe start). For `Type` and
/// `Enter` it names the focused input instead. `text` compares
/// case-insensitively against the typed text (`Type`), the focused input's
/// buffer (`Enter`), the app name (`Open_App`), or the text of a
/// `Tap_Type_and_Enter`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMatcher {
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<SwipeDirection>,
}

fn norm_text(s: &str) -> String {
    s.trim().to_lowercase()
}

impl ActionMatcher {
    /// Two matchers can both accept some action unless a field they both
    /// constrain disagrees.
    fn overlaps(&self, other: &ActionMatcher) -> bool {
        fn clash<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
            matches!((a, b), (Some(x), Some(y)) if x != y)
        }
        self.action == other.action
            && !clash(&self.element, &other.element)
            && !clash(
                &self.text.as_deref().map(norm_text),
                &other.text.as_deref().map(norm_text),
            )
            && !clash(&self.direction, &other.direction)
    }

    fn text_ok(&self, actual: Option<&str>) -> bool {
        match (&self.text, actual) {
            (None, _) => true,
            (Some(want), Some(got)) => norm_text(want) == norm_text(got),
            (Some(_), None) => false,
        }
    }

    fn element_ok(&self, actual: Option<&str>) -> bool {
        match &self.element {
            None => true,
            Some(want) => actual == Some(want.as_str()),
        }
    }

    /// Whether `action`, performed on `screen` in `state`, satisfies this matcher.
    pub fn matches(&self, action: &Action, screen: &ScreenDef, state: &DeviceState) -> bool {
        if self.action != action.name() {
            return false;
        }
        let focused = state.focus.as_deref();
        match action {
            Action::Tap { x, y } => {
                self.element_ok(screen.hit_test(*x, *y).map(|e| e.id.as_str()))
                    && self.text.is_none()
                    && self.direction.is_none()
            }
            Action::TapTypeEnter { x, y, text } => {
                self.element_ok(screen.hit_test(*x, *y).map(|e| e.id.as_str()))
                    && self.text_ok(Some(text))
            }
            Action::Swipe { x1, y1, x2, y2 } => {
                self.element_ok(screen.hit_test(*x1, *y1).map(|e| e.id.as_str()))
                    && match self.direction {
                        None => true,
                        Some(d) => SwipeDirection::of(*x1, *y1, *x2, *y2) == Some(d),
                    }
                    && self.text.is_none()
            }
            Action::Type { text } => self.element_ok(focused) && self.text_ok(Some(text)),
            Action::Enter => {
                let buffer = focused.map(|f| state.buffer(&screen.id, f));
                self.element_ok(focused) && self.text_ok(buffer)
            }
            Action::OpenApp { app_name } => self.text_ok(Some(app_name)) && self.element.is_none(),
            Action::Back | Action::Home | Action::Wait => {
                self.element.is_none() && self.text.is_none()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Focus an input on the target screen.
    Focus(String),
    /// Empty an input's buffer on the target screen.
    Clear(String),
    /// Write fixed text into an input on the target screen.
    SetText { element: String, text: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub from: String,
    pub on: ActionMatcher,
    pub to: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRule {
    pub screen: String,
    pub on: ActionMatcher,
    pub outcome: OutcomeLabel,
}

/// Rule-driven actions. `Open_App`, `Back` and `Home` are built in and
/// `Tap_Type_and_Enter` runs as its three parts.
const RULE_ACTIONS: [&str; 5] = ["Tap", "Swipe", "Type", "Enter", "Wait"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub apps: Vec<AppDef>,
    pub screens: Vec<ScreenDef>,
    #[serde(default = "default_initial")]
    pub initial_screen: String,
    #[serde(default)]
    pub transitions: Vec<TransitionRule>,
    #[serde(default)]
    pub completion_items: Vec<CriterionItem>,
    #[serde(default)]
    pub oracle_outcomes: Vec<OracleRule>,
}

fn default_initial() -> String {
    HOME_SCREEN.to_string()
}

/// Mutable simulator state.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeviceState {
    pub current: String,
    /// Screens to return to on Back; the bottom entry is always home.
    pub back_stack: Vec<String>,
    /// Input buffers keyed by screen id, then element id.
    pub buffers: BTreeMap<String, BTreeMap<String, String>>,
    pub focus: Option<String>,
}

impl DeviceState {
    pub fn buffer(&self, screen: &str, element: &str) -> &str {
        self.buffers
            .get(screen)
            .and_then(|b| b.get(element))
            .map(String::as_str)
            .unwrap_or("")
    }

    fn buffer_mut(&mut self, screen: &str, element: &str) -> &mut String {
        self.buffers
            .entry(screen.to_string())
            .or_default()
            .entry(element.to_string())
            .or_default()
    }
}

/// What one simulated action did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStep {
    pub changed: bool,
    /// Indices into `Scenario::transitions`, in firing order.
    pub rules_fired: Vec<usize>,
    pub oracle: OutcomeLabel,
}

impl ScreenDef {
    pub fn dims(&self, scenario: &Scenario) -> (u32, u32) {
        (
            self.width.unwrap_or(scenario.width),
            self.height.unwrap_or(scenario.height),
        )
    }

    /// Innermost element containing the point; ties by element id.
    pub fn hit_test(&self, x: u32, y: u32) -> Option<&ElementDef> {
        self.elements
            .iter()
            .filter(|e| e.bbox.contains(x, y))
            .min_by(|a, b| a.bbox.area().cmp(&b.bbox.area()).then(a.id.cmp(&b.id)))
    }

    pub fn element(&self, id: &str) -> Option<&ElementDef> {
        self.elements.iter().find(|e| e.id == id)
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let scenario: Scenario =
            serde_json::from_str(text).map_err(|e| EnvError::Scenario(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnvError::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| EnvError::Scenario(format!("{}: {e}", path.display())))
    }

    pub fn screen(&self, id: &str) -> Option<&ScreenDef> {
        self.screens.iter().find(|s| s.id == id)
    }

    pub fn app(&self, name: &str) -> Option<&AppDef> {
        self.apps.iter().find(|a| a.name == name)
    }

    pub fn app_names(&self) -> Vec<String> {
        self.apps.iter().map(|a| a.name.clone()).collect()
    }

    /// Structural checks: unique names, known references, sane geometry and
    /// no two transition rules that could fire on the same (screen, action).
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Scenario(m));
        if self.width == 0 || self.height == 0 {
            return bad("screen dimensions must be positive".into());
        }
        let mut app_names = BTreeSet::new();
        for app in &self.apps {
            if !app_names.insert(app.name.as_str()) {
                return bad(format!("duplicate app `{}`", app.name));
            }
        }
        let mut screen_ids = BTreeSet::new();
        for screen in &self.screens {
            if !screen_ids.insert(screen.id.as_str()) {
                return bad(format!("duplicate screen `{}`", screen.id));
            }
            if screen.app != HOME_SCREEN && !app_names.contains(screen.app.as_str()) {
                return bad(format!("screen `{}` belongs to unknown app `{}`", screen.id, screen.app));
            }
            self.validate_screen(screen)?;
        }
        if !screen_ids.contains(HOME_SCREEN) {
            return bad("scenario has no `home` screen".into());
        }
        if !screen_ids.contains(self.initial_screen.as_str()) {
            return bad(format!("initial screen `{}` does not exist", self.initial_screen));
        }
        for app in &self.apps {
            if !screen_ids.contains(app.entry.as_str()) {
                return bad(format!("app `{}` enters unknown screen `{}`", app.name, app.entry));
            }
        }
        for (i, rule) in self.transitions.iter().enumerate() {
            for id in [&rule.from, &rule.to] {
                if !screen_ids.contains(id.as_str()) {
                    return bad(format!("transition {i} references unknown screen `{id}`"));
                }
            }
            if !RULE_ACTIONS.contains(&rule.on.action.as_str()) {
                return bad(format!(
                    "transition {i}: `{}` cannot drive a rule (allowed: {})",
                    rule.on.action,
                    RULE_ACTIONS.join(", ")
                ));
            }
            if let Some(el) = &rule.on.element {
                let from = self.screen(&rule.from).expect("checked above");
                if from.element(el).is_none() {
                    return bad(format!("transition {i}: no element `{el}` on `{}`", rule.from));
                }
            }
            let target = self.screen(&rule.to).expect("checked above");
            for effect in &rule.effects {
                let el = match effect {
                    Effect::Focus(el) | Effect::Clear(el) => el,
                    Effect::SetText { element, .. } => element,
                };
                match target.element(el) {
                    Some(e) if e.kind == ElementKind::Input => {}
                    _ => return bad(format!("transition {i}: effect targets non-input `{el}`")),
                }
            }
            for (j, other) in self.transitions.iter().enumerate().skip(i + 1) {
                if rule.from == other.from && rule.on.overlaps(&other.on) {
                    return bad(format!(
                        "transitions {i} and {j} both match `{}` on screen `{}`",
                        rule.on.action, rule.from
                    ));
                }
            }
        }
        for (i, rule) in self.oracle_outcomes.iter().enumerate() {
            if !screen_ids.contains(rule.screen.as_str()) {
                return bad(format!("oracle rule {i} references unknown screen `{}`", rule.screen));
            }
            if !crate::model::ACTION_NAMES.contains(&rule.on.action.as_str()) {
                return bad(format!("oracle rule {i}: unknown action `{}`", rule.on.action));
            }
        }
        Ok(())
    }

    fn validate_screen(&self, screen: &ScreenDef) -> Result<(), EnvError> {
        let (w, h) = screen.dims(self);
        let mut ids = BTreeSet::new();
        for (i, el) in screen.elements.iter().enumerate() {
            if !ids.insert(el.id.as_str()) {
                return Err(EnvError::Scenario(format!(
                    "screen `{}` repeats element `{}`",
                    screen.id, el.id
                )));
            }
            if !el.bbox.is_within(w, h) {
                return Err(EnvError::Scenario(format!(
                    "element `{}` on `{}` lies outside {w}x{h}",
                    el.id, screen.id
                )));
            }
            for other in &screen.elements[i + 1..] {
                let nested = el.bbox.encloses(&other.bbox) || other.bbox.encloses(&el.bbox);
                if el.bbox.intersects(&other.bbox) && !nested {
                    return Err(EnvError::Scenario(format!(
                        "elements `{}` and `{}` on `{}` partially overlap",
                        el.id, other.id, screen.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> DeviceState {
        DeviceState {
            current: self.initial_screen.clone(),
            back_stack: Vec::new(),
            buffers: BTreeMap::new(),
            focus: None,
        }
    }

    fn current_screen(&self, state: &DeviceState) -> &ScreenDef {
        self.screen(&state.current)
            .expect("device state always points at a known screen")
    }

    /// Synthetic screenshot of the state: the screen's elements, with input
    /// elements showing their buffer when it is non-empty.
    pub fn render(&self, state: &DeviceState) -> Screenshot {
        let screen = self.current_screen(state);
        let (width, height) = screen.dims(self);
        let elements = screen
            .elements
            .iter()
            .map(|e| {
                let buffer = state.buffer(&screen.id, &e.id);
                let text = if e.kind == ElementKind::Input && !buffer.is_empty() {
                    buffer.to_string()
                } else {
                    e.text.clone()
                };
                ScreenElement {
                    id: e.id.clone(),
                    text,
                    bbox: e.bbox,
                    kind: e.kind,
                }
            })
            .collect();
        Screenshot {
            width,
            height,
            source: "sim".into(),
            payload: ScreenPayload::Synthetic(SyntheticScreen {
                screen_id: screen.id.clone(),
                elements,
            }),
        }
    }

    fn rule_for(&self, action: &Action, state: &DeviceState) -> Option<usize> {
        let screen = self.current_screen(state);
        self.transitions
            .iter()
            .position(|r| r.from == state.current && r.on.matches(action, screen, state))
    }

    fn fire(&self, index: usize, state: &mut DeviceState) {
        let rule = &self.transitions[index];
        if rule.to != state.current {
            state.back_stack.push(std::mem::take(&mut state.current));
            state.current = rule.to.clone();
            state.focus = None;
        }
        for effect in &rule.effects {
            match effect {
                Effect::Focus(el) => state.focus = Some(el.clone()),
                Effect::Clear(el) => state.buffer_mut(&rule.to, el).clear(),
                Effect::SetText { element, text } => {
                    *state.buffer_mut(&rule.to, element) = text.clone()
                }
            }
        }
    }

    /// One simulated action: total, never fails; useless input is a no-change.
    pub fn step(&self, state: &DeviceState, action: &Action) -> (DeviceState, SimStep) {
        let mut next = state.clone();
        let mut fired = Vec::new();
        self.apply(&mut next, action, &mut fired);
        let changed = next != *state;
        let oracle = self.oracle_outcome(state, action, changed);
        (
            next,
            SimStep {
                changed,
                rules_fired: fired,
                oracle,
            },
        )
    }

    fn apply(&self, state: &mut DeviceState, action: &Action, fired: &mut Vec<usize>) {
        match action {
            Action::OpenApp { app_name } => {
                if state.current == HOME_SCREEN {
                    if let Some(app) = self.app(app_name) {
                        state.back_stack.push(HOME_SCREEN.to_string());
                        state.current = app.entry.clone();
                        state.focus = None;
                    }
                }
            }
            Action::Back => {
                if let Some(prev) = state.back_stack.pop() {
                    state.current = prev;
                    state.focus = None;
                }
            }
            Action::Home => {
                state.current = HOME_SCREEN.to_string();
                state.back_stack.clear();
                state.focus = None;
            }
            Action::Tap { x, y } => {
                let hit = self.current_screen(state).hit_test(*x, *y).cloned();
                let rule = self.rule_for(action, state);
                if let Some(el) = hit.filter(|e| e.kind == ElementKind::Input) {
                    state.focus = Some(el.id);
                }
                if let Some(i) = rule {
                    fired.push(i);
                    self.fire(i, state);
                }
            }
            Action::Type { text } => {
                let rule = self.rule_for(action, state);
                if let Some(focus) = state.focus.clone() {
                    let screen = state.current.clone();
                    state.buffer_mut(&screen, &focus).push_str(text);
                }
                if let Some(i) = rule {
                    fired.push(i);
                    self.fire(i, state);
                }
            }
            Action::Enter | Action::Swipe { .. } | Action::Wait => {
                if let Some(i) = self.rule_for(action, state) {
                    fired.push(i);
                    self.fire(i, state);
                }
            }
            Action::TapTypeEnter { x, y, text } => {
                self.apply(state, &Action::Tap { x: *x, y: *y }, fired);
                self.apply(state, &Action::Type { text: text.clone() }, fired);
                self.apply(state, &Action::Enter, fired);
            }
        }
    }

    /// Scenario-declared verdict for the action, else Success iff it changed
    /// the state.
    pub fn oracle_outcome(&self, before: &DeviceState, action: &Action, changed: bool) -> OutcomeLabel {
        let screen = self.current_screen(before);
        self.oracle_outcomes
            .iter()
            .find(|o| o.screen == before.current && o.on.matches(action, screen, before))
            .map(|o| o.outcome)
            .unwrap_or(if changed {
                OutcomeLabel::Success
            } else {
                OutcomeLabel::FailedNoChange
            })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn small_scenario_json() -> &'static str {
        r#"{
          "name": "small",
          "width": 1080, "height": 2400,
          "apps": [{"name": "Maps", "entry": "maps_main", "package": "com.google.android.apps.maps"}],
          "screens": [
            {"id": "home", "app": "home", "elements": [
              {"id": "maps_icon", "text": "Maps", "bbox": [100, 1800, 250, 1950], "kind": "icon"}]},
            {"id": "maps_main", "app": "Maps", "elements": [
              {"id": "search_bar", "text": "Search here", "bbox": [90, 230, 720, 290], "kind": "input"},
              {"id": "map", "text": "map", "bbox": [0, 400, 1080, 2400], "kind": "icon"},
              {"id": "pin", "text": "pin", "bbox": [500, 1000, 560, 1060], "kind": "icon"}]},
            {"id": "maps_results", "app": "Maps", "elements": [
              {"id": "r1", "text": "RAMEN-SAN", "bbox": [0, 1500, 1080, 1700], "kind": "text"}]},
            {"id": "maps_more", "app": "Maps", "elements": []},
            {"id": "maps_place", "app": "Maps", "elements": []}
          ],
          "transitions": [
            {"from": "maps_main", "on": {"action": "Enter", "text": "ramen"}, "to": "maps_results"},
            {"from": "maps_main", "on": {"action": "Tap", "element": "pin"}, "to": "maps_place"},
            {"from": "maps_results", "on": {"action": "Swipe", "direction": "up"}, "to": "maps_more"},
            {"from": "maps_results", "on": {"action": "Tap", "element": "r1"}, "to": "maps_place"}
          ],
          "oracle_outcomes": [
            {"screen": "maps_main", "on": {"action": "Tap", "element": "pin"}, "outcome": "B"}
          ]
        }"#
    }

    pub(crate) fn small() -> Scenario {
        Scenario::from_json(small_scenario_json()).unwrap()
    }

    fn run(s: &Scenario, actions: &[Action]) -> DeviceState {
        actions
            .iter()
            .fold(s.initial_state(), |st, a| s.step(&st, a).0)
    }

    fn open_maps() -> Action {
        Action::OpenApp {
            app_name: "Maps".into(),
        }
    }

    #[test]
    fn open_app_only_from_home() {
        let s = small();
        let st = run(&s, &[open_maps()]);
        assert_eq!(st.current, "maps_main");
        assert_eq!(st.back_stack, ["home"]);
        let (again, step) = s.step(&st, &open_maps());
        assert_eq!(again, st);
        assert!(!step.changed);
        assert_eq!(step.oracle, OutcomeLabel::FailedNoChange);
        let unknown = s.step(&s.initial_state(), &Action::OpenApp { app_name: "Chess".into() });
        assert!(!unknown.1.changed);
    }

    #[test]
    fn back_after_open_is_identity() {
        let s = small();
        let st = run(&s, &[open_maps(), Action::Back]);
        assert_eq!(st.current, "home");
        assert!(st.back_stack.is_empty());
        let (same, step) = s.step(&st, &Action::Back);
        assert_eq!(same, st);
        assert!(!step.changed);
    }

    #[test]
    fn tap_on_empty_space_is_no_change() {
        let s = small();
        let st = run(&s, &[open_maps()]);
        let (next, step) = s.step(&st, &Action::Tap { x: 1000, y: 300 });
        assert_eq!(next, st);
        assert!(!step.changed && step.rules_fired.is_empty());
    }

    #[test]
    fn nested_hit_test_prefers_innermost() {
        let s = small();
        let st = run(&s, &[open_maps()]);
        let (next, step) = s.step(&st, &Action::Tap { x: 530, y: 1030 });
        assert_eq!(next.current, "maps_place");
        assert_eq!(step.rules_fired, [1]);
        assert_eq!(step.oracle, OutcomeLabel::FailedWrongPage);
    }

    #[test]
    fn typing_needs_focus_and_enter_matches_buffer() {
        let s = small();
        let st = run(&s, &[open_maps(), Action::Type { text: "ramen".into() }]);
        assert_eq!(st.buffer("maps_main", "search_bar"), "");
        let st = run(
            &s,
            &[
                open_maps(),
                Action::Tap { x: 404, y: 260 },
                Action::Type { text: "Ramen ".into() },
                Action::Enter,
            ],
        );
        assert_eq!(st.current, "maps_results");
        assert_eq!(st.back_stack, ["home", "maps_main"]);
        let st2 = run(
            &s,
            &[
                open_maps(),
                Action::TapTypeEnter {
                    x: 404,
                    y: 260,
                    text: "ramen".into(),
                },
            ],
        );
        assert_eq!(st2.current, "maps_results");
        let shot = s.render(&st2);
        assert_eq!(shot.screen_id(), Some("maps_results"));
    }

    #[test]
    fn rendered_input_shows_buffer() {
        let s = small();
        let st = run(&s, &[open_maps(), Action::Tap { x: 404, y: 260 }, Action::Type { text: "ra".into() }]);
        let shot = s.render(&st);
        match shot.payload {
            ScreenPayload::Synthetic(screen) => {
                let el = screen.elements.iter().find(|e| e.id == "search_bar").unwrap();
                assert_eq!(el.text, "ra");
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn swipe_direction_matters() {
        let s = small();
        let st = run(
            &s,
            &[open_maps(), Action::TapTypeEnter { x: 404, y: 260, text: "ramen".into() }],
        );
        let down = Action::Swipe { x1: 630, y1: 400, x2: 630, y2: 1400 };
        assert!(!s.step(&st, &down).1.changed);
        let up = Action::Swipe { x1: 630, y1: 1400, x2: 630, y2: 280 };
        assert_eq!(s.step(&st, &up).0.current, "maps_more");
        assert_eq!(SwipeDirection::of(0, 0, 10, 0), Some(SwipeDirection::Right));
        assert_eq!(SwipeDirection::of(5, 5, 5, 5), None);
    }

    #[test]
    fn home_resets_stack() {
        let s = small();
        let st = run(
            &s,
            &[open_maps(), Action::TapTypeEnter { x: 404, y: 260, text: "ramen".into() }, Action::Home],
        );
        assert_eq!(st.current, "home");
        assert!(st.back_stack.is_empty());
    }

    #[test]
    fn ambiguous_rules_rejected_at_load() {
        let mut v: serde_json::Value = serde_json::from_str(small_scenario_json()).unwrap();
        v["transitions"]
            .as_array_mut()
            .unwrap()
            .push(serde_json::json!({"from": "maps_main", "on": {"action": "Enter"}, "to": "maps_more"}));
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("both match"), "{err}");

        // Distinct texts do not overlap.
        let mut v: serde_json::Value = serde_json::from_str(small_scenario_json()).unwrap();
        v["transitions"].as_array_mut().unwrap().push(
            serde_json::json!({"from": "maps_main", "on": {"action": "Enter", "text": "sushi"}, "to": "maps_more"}),
        );
        assert!(Scenario::from_json(&v.to_string()).is_ok());
    }

    #[test]
    fn load_time_structure_checks() {
        type Mutation = Box<dyn Fn(&mut serde_json::Value)>;
        let base: serde_json::Value = serde_json::from_str(small_scenario_json()).unwrap();
        let cases: Vec<(&str, Mutation)> = vec![
            ("unknown screen", Box::new(|v| v["transitions"][0]["to"] = "nowhere".into())),
            ("initial", Box::new(|v| v["initial_screen"] = "nowhere".into())),
            ("duplicate app", Box::new(|v| {
                let app = v["apps"][0].clone();
                v["apps"].as_array_mut().unwrap().push(app);
            })),
            ("outside", Box::new(|v| v["screens"][0]["elements"][0]["bbox"] = serde_json::json!([0, 0, 5000, 10]))),
            ("partially overlap", Box::new(|v| v["screens"][1]["elements"][2]["bbox"] = serde_json::json!([1000, 1000, 1100, 1060]))),
            ("cannot drive", Box::new(|v| v["transitions"][0]["on"]["action"] = "Back".into())),
        ];
        for (needle, mutate) in cases {
            let mut v = base.clone();
            mutate(&mut v);
            let err = Scenario::from_json(&v.to_string()).unwrap_err().to_string();
            assert!(err.contains(needle), "expected `{needle}` in `{err}`");
        }
    }
}
