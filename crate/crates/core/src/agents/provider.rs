//! Model providers: a scripted test double and a JSON-over-HTTP client.

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::request::{whitespace_tokens, ModelRequest, ModelResponse, UserPart};

pub const PROVIDER_URL_ENV: &str = "MAR_PROVIDER_URL";
pub const PROVIDER_KEY_ENV: &str = "MAR_PROVIDER_KEY";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider script exhausted after {used} responses")]
    ScriptExhausted { used: usize },
    #[error("script step {step}: prompt does not contain `{matcher}`")]
    MatcherMiss { step: usize, matcher: String },
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider reply: {0}")]
    Protocol(String),
    #[error("provider not configured: {0}")]
    Config(String),
    #[error("cannot read provider script {path}: {reason}")]
    Script { path: String, reason: String },
}

/// A reasoning model. Implementations serve concurrent task runs.
pub trait Provider: Send + Sync {
    fn describe(&self) -> String;
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    #[serde(rename = "match")]
    pub matcher: String,
    pub response: String,
}

/// Replays responses in order, checking each prompt contains its matcher.
#[derive(Debug)]
pub struct ScriptedProvider {
    steps: Vec<ScriptStep>,
    cursor: Mutex<usize>,
}

impl ScriptedProvider {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        Self {
            steps,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        let steps = serde_json::from_str(text).map_err(|e| ProviderError::Script {
            path: "<inline>".into(),
            reason: e.to_string(),
        })?;
        Ok(Self::new(steps))
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let err = |reason: String| ProviderError::Script {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let steps = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        Ok(Self::new(steps))
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Responses handed out so far.
    pub fn used(&self) -> usize {
        *self.cursor.lock().expect("script cursor poisoned")
    }
}

impl Provider for ScriptedProvider {
    fn describe(&self) -> String {
        format!("scripted({} steps)", self.steps.len())
    }

    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError> {
        let mut cursor = self.cursor.lock().expect("script cursor poisoned");
        let step = self
            .steps
            .get(*cursor)
            .ok_or(ProviderError::ScriptExhausted { used: *cursor })?;
        let prompt = request.flattened_text();
        if !prompt.contains(&step.matcher) {
            return Err(ProviderError::MatcherMiss {
                step: *cursor,
                matcher: step.matcher.clone(),
            });
        }
        *cursor += 1;
        Ok(ModelResponse {
            input_tokens: whitespace_tokens(&prompt),
            output_tokens: whitespace_tokens(&step.response),
            text: step.response.clone(),
        })
    }
}

#[derive(Debug, Deserialize)]
struct WireReply {
    text: String,
    #[serde(default)]
    input_tokens: Option<u64>,
    #[serde(default)]
    output_tokens: Option<u64>,
}

/// POSTs each request as JSON to a single endpoint.
///
/// Body: `{"role", "system_text", "user_parts": [{"type": "text", "text"} |
/// {"type": "image", "label", "media_type", "data"}], "max_tokens",
/// "temperature"}`; reply: `{"text", "input_tokens"?, "output_tokens"?}`.
pub struct HttpProvider {
    url: String,
    key: Option<String>,
    client: reqwest::blocking::Client,
    pub retries: u32,
    pub backoff: Duration,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("url", &self.url)
            .field("retries", &self.retries)
            .finish()
    }
}

impl HttpProvider {
    pub fn new(url: &str, key: Option<String>) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            url: url.to_string(),
            key,
            client,
            retries: 3,
            backoff: Duration::from_millis(500),
        })
    }

    /// Reads the endpoint and optional key from the environment.
    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(PROVIDER_URL_ENV)
            .map_err(|_| ProviderError::Config(format!("{PROVIDER_URL_ENV} is not set")))?;
        Self::new(&url, std::env::var(PROVIDER_KEY_ENV).ok())
    }

    pub fn wire_body(request: &ModelRequest) -> serde_json::Value {
        let parts: Vec<_> = request
            .user_parts
            .iter()
            .map(|p| match p {
                UserPart::Text { text } => json!({"type": "text", "text": text}),
                UserPart::Image { label, screenshot } => json!({
                    "type": "image",
                    "label": label,
                    "media_type": match screenshot.file_extension() {
                        "png" => "image/png",
                        _ => "application/json",
                    },
                    "data": screenshot.encoded(),
                }),
            })
            .collect();
        json!({
            "role": request.role,
            "system_text": request.system_text,
            "user_parts": parts,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<reqwest::blocking::Response, reqwest::Error> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        req.send()
    }
}

impl Provider for HttpProvider {
    fn describe(&self) -> String {
        format!("http:{}", self.url)
    }

    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, ProviderError> {
        let body = Self::wire_body(request);
        let mut attempt = 0;
        let resp = loop {
            match self.attempt(&body) {
                Ok(resp) => break resp,
                Err(e) if attempt < self.retries => {
                    let wait = self.backoff * 2u32.pow(attempt);
                    log::warn!("provider transport error ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(ProviderError::Transport(e.to_string())),
            }
        };
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let reply: WireReply =
            serde_json::from_str(&text).map_err(|e| ProviderError::Protocol(e.to_string()))?;
        Ok(ModelResponse {
            input_tokens: reply
                .input_tokens
                .unwrap_or_else(|| whitespace_tokens(&request.flattened_text())),
            output_tokens: reply
                .output_tokens
                .unwrap_or_else(|| whitespace_tokens(&reply.text)),
            text: reply.text,
        })
    }
}
