//! The closed atomic action set and its canonical text form.
//!
//! Model output carries actions as `Name at {json-args}`, e.g.
//! `Tap at {"x": 404, "y": 260}` or `Enter at null`. [`Action::render`] emits
//! exactly that form and [`parse_action`] accepts it back, so the two are
//! inverse on every value of [`Action`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use super::{ModelError, Screenshot};

/// One primitive device operation, or the tap-type-enter shortcut.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    OpenApp { app_name: String },
    Tap { x: u32, y: u32 },
    Swipe { x1: u32, y1: u32, x2: u32, y2: u32 },
    Type { text: String },
    Enter,
    Back,
    Home,
    Wait,
    TapTypeEnter { x: u32, y: u32, text: String },
}

/// Wire names of the nine variants, in declaration order.
pub const ACTION_NAMES: [&str; 9] = [
    "Open_App",
    "Tap",
    "Swipe",
    "Type",
    "Enter",
    "Back",
    "Home",
    "Wait",
    "Tap_Type_and_Enter",
];

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::OpenApp { .. } => "Open_App",
            Action::Tap { .. } => "Tap",
            Action::Swipe { .. } => "Swipe",
            Action::Type { .. } => "Type",
            Action::Enter => "Enter",
            Action::Back => "Back",
            Action::Home => "Home",
            Action::Wait => "Wait",
            Action::TapTypeEnter { .. } => "Tap_Type_and_Enter",
        }
    }

    /// Every (x, y) point the action touches.
    pub fn points(&self) -> Vec<(u32, u32)> {
        match *self {
            Action::Tap { x, y } | Action::TapTypeEnter { x, y, .. } => vec![(x, y)],
            Action::Swipe { x1, y1, x2, y2 } => vec![(x1, y1), (x2, y2)],
            _ => Vec::new(),
        }
    }

    /// Canonical `Name at {args}` text.
    pub fn render(&self) -> String {
        format!("{} at {}", self.name(), self.render_args())
    }

    fn render_args(&self) -> String {
        match self {
            Action::OpenApp { app_name } => format!("{{\"app_name\": {}}}", json_str(app_name)),
            Action::Tap { x, y } => format!("{{\"x\": {x}, \"y\": {y}}}"),
            Action::Swipe { x1, y1, x2, y2 } => {
                format!("{{\"x1\": {x1}, \"y1\": {y1}, \"x2\": {x2}, \"y2\": {y2}}}")
            }
            Action::Type { text } => format!("{{\"text\": {}}}", json_str(text)),
            Action::Enter | Action::Back | Action::Home | Action::Wait => "null".to_string(),
            Action::TapTypeEnter { x, y, text } => {
                format!("{{\"x\": {x}, \"y\": {y}, \"text\": {}}}", json_str(text))
            }
        }
    }
}

fn json_str(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for Action {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_action(s)
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_action(&s).map_err(serde::de::Error::custom)
    }
}

/// Parses the canonical action text. Surrounding whitespace is ignored.
pub fn parse_action(text: &str) -> Result<Action, ModelError> {
    let fail = |reason: String| ModelError::Parse {
        text: text.to_string(),
        reason,
    };
    let trimmed = text.trim();
    let (name, args) = match trimmed.split_once(" at ") {
        Some((name, args)) => (name.trim(), args.trim()),
        None => return Err(fail("expected `<Name> at <args>`".into())),
    };
    if !ACTION_NAMES.contains(&name) {
        return Err(fail(format!("unknown action `{name}`")));
    }
    let args: Value =
        serde_json::from_str(args).map_err(|e| fail(format!("arguments are not JSON: {e}")))?;

    let mut reader = ArgReader::new(name, args).map_err(fail)?;
    let action = match name {
        "Open_App" => Action::OpenApp {
            app_name: reader.string("app_name")?,
        },
        "Tap" => Action::Tap {
            x: reader.coord("x")?,
            y: reader.coord("y")?,
        },
        "Swipe" => Action::Swipe {
            x1: reader.coord("x1")?,
            y1: reader.coord("y1")?,
            x2: reader.coord("x2")?,
            y2: reader.coord("y2")?,
        },
        "Type" => Action::Type {
            text: reader.string("text")?,
        },
        "Enter" => Action::Enter,
        "Back" => Action::Back,
        "Home" => Action::Home,
        "Wait" => Action::Wait,
        "Tap_Type_and_Enter" => Action::TapTypeEnter {
            x: reader.coord("x")?,
            y: reader.coord("y")?,
            text: reader.string("text")?,
        },
        _ => unreachable!("name checked against ACTION_NAMES"),
    };
    reader.finish()?;
    Ok(action)
}

/// Pulls typed fields out of the argument object and tracks leftovers.
struct ArgReader<'a> {
    name: &'a str,
    raw: String,
    fields: Map<String, Value>,
}

impl<'a> ArgReader<'a> {
    fn new(name: &'a str, args: Value) -> Result<Self, String> {
        let raw = args.to_string();
        let takes_args = !matches!(name, "Enter" | "Back" | "Home" | "Wait");
        match (takes_args, args) {
            (false, Value::Null) => Ok(Self {
                name,
                raw,
                fields: Map::new(),
            }),
            (false, other) => Err(format!("`{name}` takes no arguments, got {other}")),
            (true, Value::Object(fields)) => Ok(Self { name, raw, fields }),
            (true, other) => Err(format!("`{name}` needs an argument object, got {other}")),
        }
    }

    fn error(&self, reason: String) -> ModelError {
        ModelError::Parse {
            text: format!("{} at {}", self.name, self.raw),
            reason,
        }
    }

    fn take(&mut self, key: &str) -> Result<Value, ModelError> {
        self.fields
            .remove(key)
            .ok_or_else(|| self.error(format!("missing argument `{key}`")))
    }

    fn coord(&mut self, key: &str) -> Result<u32, ModelError> {
        let value = self.take(key)?;
        value
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| {
                self.error(format!(
                    "argument `{key}` must be a non-negative integer, got {value}"
                ))
            })
    }

    fn string(&mut self, key: &str) -> Result<String, ModelError> {
        match self.take(key)? {
            Value::String(s) => Ok(s),
            other => Err(self.error(format!("argument `{key}` must be a string, got {other}"))),
        }
    }

    fn finish(self) -> Result<(), ModelError> {
        match self.fields.keys().next() {
            Some(extra) => Err(self.error(format!("unexpected argument `{extra}`"))),
            None => Ok(()),
        }
    }
}

/// Accepts iff every coordinate lies within `[0, width) x [0, height)`.
pub fn validate_action(action: &Action, screen: &Screenshot) -> Result<(), ModelError> {
    for (x, y) in action.points() {
        if x >= screen.width || y >= screen.height {
            return Err(ModelError::OutOfBounds {
                x,
                y,
                width: screen.width,
                height: screen.height,
            });
        }
    }
    Ok(())
}
