//! Domain types shared by every stage of the agent loop.

mod action;

pub use action::{parse_action, validate_action, Action, ACTION_NAMES};

use std::fmt;
use std::io::Cursor;
use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot parse action `{text}`: {reason}")]
    Parse { text: String, reason: String },
    #[error("coordinate ({x}, {y}) outside {width}x{height} screen")]
    OutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("task instruction is empty")]
    EmptyInstruction,
    #[error("error-log feedback must not be empty")]
    EmptyFeedback,
    #[error("invalid screenshot: {0}")]
    Screenshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The user's task, non-empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TaskInstruction(String);

impl TaskInstruction {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyInstruction);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TaskInstruction {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<TaskInstruction> for String {
    fn from(value: TaskInstruction) -> Self {
        value.0
    }
}

impl fmt::Display for TaskInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Axis-aligned box in pixels, `[x1, y1, x2, y2)` with origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub const fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }

    pub fn is_within(&self, width: u32, height: u32) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2 && self.x2 <= width && self.y2 <= height
    }

    pub fn area(&self) -> u64 {
        u64::from(self.x2.saturating_sub(self.x1)) * u64::from(self.y2.saturating_sub(self.y1))
    }

    pub fn encloses(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x1 < other.x2 && other.x1 < self.x2 && self.y1 < other.y2 && other.y1 < self.y2
    }
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Text,
    Icon,
    Input,
}

/// One visible element of a synthetic screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenElement {
    pub id: String,
    pub text: String,
    pub bbox: BBox,
    pub kind: ElementKind,
}

/// Structured stand-in for pixels produced by the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticScreen {
    pub screen_id: String,
    #[serde(default)]
    pub elements: Vec<ScreenElement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScreenPayload {
    Png {
        #[serde(with = "base64_bytes")]
        data: Vec<u8>,
    },
    Synthetic(SyntheticScreen),
}

mod base64_bytes {
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

/// A captured screen: PNG bytes from a device, or a synthetic screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenshot {
    pub width: u32,
    pub height: u32,
    pub source: String,
    pub payload: ScreenPayload,
}

impl Screenshot {
    /// A synthetic screenshot with no elements.
    pub fn synthetic(screen_id: &str, width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            source: "sim".into(),
            payload: ScreenPayload::Synthetic(SyntheticScreen {
                screen_id: screen_id.into(),
                elements: Vec::new(),
            }),
        }
    }

    pub fn from_png(data: Vec<u8>, source: &str) -> Result<Self, ModelError> {
        if data.is_empty() {
            return Err(ModelError::Screenshot("empty PNG payload".into()));
        }
        let (width, height) = image::ImageReader::with_format(
            Cursor::new(&data),
            image::ImageFormat::Png,
        )
        .into_dimensions()
        .map_err(|e| ModelError::Screenshot(e.to_string()))?;
        if width == 0 || height == 0 {
            return Err(ModelError::Screenshot("zero-sized image".into()));
        }
        Ok(Self {
            width,
            height,
            source: source.into(),
            payload: ScreenPayload::Png { data },
        })
    }

    pub fn screen_id(&self) -> Option<&str> {
        match &self.payload {
            ScreenPayload::Synthetic(s) => Some(&s.screen_id),
            ScreenPayload::Png { .. } => None,
        }
    }

    /// Bytes written when the screenshot is persisted.
    pub fn file_bytes(&self) -> Vec<u8> {
        match &self.payload {
            ScreenPayload::Png { data } => data.clone(),
            ScreenPayload::Synthetic(_) => {
                serde_json::to_vec(self).expect("screenshot serializes")
            }
        }
    }

    pub fn file_extension(&self) -> &'static str {
        match self.payload {
            ScreenPayload::Png { .. } => "png",
            ScreenPayload::Synthetic(_) => "json",
        }
    }

    /// Hex SHA-256 of [`Screenshot::file_bytes`].
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.file_bytes())
    }

    /// Content-addressed file name, e.g. `3fa1...e2.json`.
    pub fn file_name(&self) -> String {
        format!("{}.{}", self.content_hash(), self.file_extension())
    }

    /// Loads a persisted screenshot (`.png` or a `.json` synthetic stand-in).
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => Self::from_png(bytes, "file"),
            _ => serde_json::from_slice(&bytes).map_err(|e| {
                ModelError::Screenshot(format!("{}: {e}", path.display()))
            }),
        }
    }

    /// Base64 PNG for provider payloads; synthetic screens go as their JSON.
    pub fn encoded(&self) -> String {
        base64::engine::general_purpose::STANDARD.encode(self.file_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextElement {
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IconElement {
    pub bbox: BBox,
    pub caption: String,
}

/// Fine-grained perception of one screenshot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionResult {
    pub texts: Vec<TextElement>,
    pub icons: Vec<IconElement>,
}

impl PerceptionResult {
    pub fn is_empty(&self) -> bool {
        self.texts.is_empty() && self.icons.is_empty()
    }

    pub fn is_within(&self, width: u32, height: u32) -> bool {
        self.texts.iter().all(|t| t.bbox.is_within(width, height))
            && self.icons.iter().all(|i| i.bbox.is_within(width, height))
    }

    /// One line per element, texts first then icons.
    pub fn lines(&self) -> Vec<String> {
        self.texts
            .iter()
            .map(|t| format!("text \"{}\" at {}", t.text, t.bbox))
            .chain(
                self.icons
                    .iter()
                    .map(|i| format!("icon \"{}\" at {}", i.caption, i.bbox)),
            )
            .collect()
    }
}

/// Reflector verdict on one action. Wire codes are `A`, `B` and `C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeLabel {
    #[serde(rename = "A")]
    Success,
    #[serde(rename = "B")]
    FailedWrongPage,
    #[serde(rename = "C")]
    FailedNoChange,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 3] = [
        OutcomeLabel::Success,
        OutcomeLabel::FailedWrongPage,
        OutcomeLabel::FailedNoChange,
    ];

    pub fn code(self) -> &'static str {
        match self {
            OutcomeLabel::Success => "A",
            OutcomeLabel::FailedWrongPage => "B",
            OutcomeLabel::FailedNoChange => "C",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "A" => Some(OutcomeLabel::Success),
            "B" => Some(OutcomeLabel::FailedWrongPage),
            "C" => Some(OutcomeLabel::FailedNoChange),
            _ => None,
        }
    }

    pub fn is_success(self) -> bool {
        self == OutcomeLabel::Success
    }
}

/// Current subtask and the app it targets (`None` for Home-screen work).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub description: String,
    pub app: Option<String>,
}

impl Subtask {
    pub fn app_label(&self) -> &str {
        self.app.as_deref().unwrap_or("None")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub step: u32,
    pub action: Action,
    pub outcome: OutcomeLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorLogEntry {
    pub step: u32,
    pub action: Action,
    pub feedback: String,
}

/// Per-task state threaded through the loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub plan: String,
    pub subtask: Option<Subtask>,
    pub progress: String,
    pub notes: String,
    pub error_flag: bool,
    pub action_log: Vec<ActionLogEntry>,
    pub error_log: Vec<ErrorLogEntry>,
    pub step: u32,
}

impl Default for WorkingMemory {
    fn default() -> Self {
        Self::new()
    }
}

impl WorkingMemory {
    pub fn new() -> Self {
        Self {
            plan: String::new(),
            subtask: None,
            progress: String::new(),
            notes: String::new(),
            error_flag: false,
            action_log: Vec::new(),
            error_log: Vec::new(),
            step: 1,
        }
    }

    /// Appends to the action log, and to the error log iff the outcome failed.
    pub fn record_outcome(
        &mut self,
        action: Action,
        outcome: OutcomeLabel,
        feedback: &str,
    ) -> Result<(), ModelError> {
        if !outcome.is_success() && feedback.trim().is_empty() {
            return Err(ModelError::EmptyFeedback);
        }
        let step = self.step;
        if !outcome.is_success() {
            self.error_log.push(ErrorLogEntry {
                step,
                action: action.clone(),
                feedback: feedback.to_string(),
            });
        }
        self.action_log.push(ActionLogEntry {
            step,
            action,
            outcome,
        });
        Ok(())
    }

    pub fn recent_actions(&self, k: usize) -> &[ActionLogEntry] {
        tail(&self.action_log, k)
    }

    pub fn recent_errors(&self, k: usize) -> &[ErrorLogEntry] {
        tail(&self.error_log, k)
    }
}

pub(crate) fn tail<T>(items: &[T], k: usize) -> &[T] {
    &items[items.len().saturating_sub(k)..]
}
