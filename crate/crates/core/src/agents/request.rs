use serde::{Deserialize, Serialize};

use crate::model::{sha256_hex, Screenshot};

pub const DEFAULT_MAX_TOKENS: u32 = 2048;
pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Manager,
    Operator,
    Reflector,
    Notetaker,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Manager, Role::Operator, Role::Reflector, Role::Notetaker];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Manager => "manager",
            Role::Operator => "operator",
            Role::Reflector => "reflector",
            Role::Notetaker => "notetaker",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserPart {
    Text { text: String },
    Image { label: String, screenshot: Screenshot },
}

impl UserPart {
    pub fn text(text: impl Into<String>) -> Self {
        UserPart::Text { text: text.into() }
    }

    pub fn image(label: &str, screenshot: &Screenshot) -> Self {
        UserPart::Image {
            label: label.into(),
            screenshot: screenshot.clone(),
        }
    }

    fn flatten(&self) -> String {
        match self {
            UserPart::Text { text } => text.clone(),
            UserPart::Image { label, screenshot } => {
                format!("[image:{label}:{}]", &screenshot.content_hash()[..16])
            }
        }
    }
}

/// One call to a reasoning model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub role: Role,
    pub system_text: String,
    pub user_parts: Vec<UserPart>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ModelRequest {
    pub fn new(role: Role, system_text: String, user_parts: Vec<UserPart>) -> Self {
        debug_assert!(!user_parts.is_empty(), "a request needs at least one user part");
        Self {
            role,
            system_text,
            user_parts,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    /// System text and user parts as one string, images as placeholders.
    pub fn flattened_text(&self) -> String {
        let mut out = self.system_text.clone();
        for part in &self.user_parts {
            out.push_str("\n\n");
            out.push_str(&part.flatten());
        }
        out
    }

    /// Concatenated text parts only.
    pub fn user_text(&self) -> String {
        self.user_parts
            .iter()
            .filter_map(|p| match p {
                UserPart::Text { text } => Some(text.as_str()),
                UserPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn images(&self) -> impl Iterator<Item = (&str, &Screenshot)> {
        self.user_parts.iter().filter_map(|p| match p {
            UserPart::Image { label, screenshot } => Some((label.as_str(), screenshot)),
            UserPart::Text { .. } => None,
        })
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.flattened_text().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Whitespace-separated token count, the accounting unit for offline runs.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}
