//! Chat-completion backends: a live HTTP client, transcript replay and
//! recording, plus token accounting.

mod live;
mod transcript;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{LiveBackend, LiveConfig, ENV_API_KEY, ENV_BASE_URL};
pub use transcript::{RecordingBackend, ReplayBackend, Transcript, TranscriptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One request to a chat backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub model: String,
    pub messages: Vec<Message>,
    #[serde(default)]
    pub temperature: f64,
    /// Name of the template that produced the request. Local bookkeeping only:
    /// never sent over the wire and not part of the digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl ChatExchange {
    pub fn new(model: impl Into<String>, messages: Vec<Message>) -> Result<Self, LlmError> {
        let ex = ChatExchange {
            model: model.into(),
            messages,
            temperature: 0.0,
            tag: None,
        };
        ex.validate()?;
        Ok(ex)
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.last() {
            None => Err(LlmError::InvalidExchange("message list is empty".into())),
            Some(m) if m.role != Role::User => Err(LlmError::InvalidExchange(
                "last message must have role user".into(),
            )),
            _ => Ok(()),
        }
    }

    /// The JSON body sent to a live endpoint.
    pub fn wire_body(&self) -> Value {
        serde_json::json!({
            "model": self.model,
            "messages": self.messages,
            "temperature": self.temperature,
        })
    }

    /// Hex SHA-256 of the canonical (sorted-key, compact) wire body.
    pub fn digest(&self) -> String {
        let canonical = canonical_json(&self.wire_body());
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Concatenated text of all user messages, handy for assertions.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Compact JSON with object keys sorted recursively.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<_> = map.keys().collect();
                keys.sort();
                let mut out = serde_json::Map::new();
                for k in keys {
                    out.insert(k.clone(), sort(&map[k]));
                }
                Value::Object(out)
            }
            Value::Array(items) => Value::Array(items.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    // Inserting in sorted order keeps keys sorted whichever map backs serde_json.
    serde_json::to_string(&sort(v)).expect("json values serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendTag {
    Live,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend: BackendTag,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid exchange: {0}")]
    InvalidExchange(String),
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("rate limited{}", retry_after.map(|d| format!(", retry after {}s", d.as_secs())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("no transcript record matches request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("could not persist transcript to {}: {source}", path.display())]
    PersistFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("could not read transcript {}: {message}", path.display())]
    TranscriptRead { path: PathBuf, message: String },
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("{0}")]
    Other(String),
}

/// A source of completions. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError> {
        (**self).complete(exchange)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, exchange: &ChatExchange) -> Result<Completion, LlmError> {
        (**self).complete(exchange)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub sum: u64,
    pub mean: f64,
    pub stddev: f64,
}

/// Sum, mean and sample standard deviation (n − 1 denominator) of the
/// completion token counts. Fewer than two samples give a deviation of 0.
pub fn token_totals(records: &[Completion]) -> TokenTotals {
    let counts: Vec<u64> = records.iter().map(|c| c.completion_tokens).collect();
    token_totals_of(&counts)
}

pub fn token_totals_of(counts: &[u64]) -> TokenTotals {
    if counts.is_empty() {
        return TokenTotals::default();
    }
    let sum: u64 = counts.iter().sum();
    let n = counts.len() as f64;
    let mean = sum as f64 / n;
    let stddev = if counts.len() < 2 {
        0.0
    } else {
        let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    };
    TokenTotals { sum, mean, stddev }
}
