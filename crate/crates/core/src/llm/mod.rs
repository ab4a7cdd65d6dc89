//! Chat-completion providers: a remote OpenAI-style client with retries, a
//! deterministic mock, and audit-log recording and replay.

mod audit;
mod json;
mod mock;
mod remote;
mod retry;

use std::fmt;
use std::hash::Hasher;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{AuditEntry, RecordingProvider, ReplayProvider};
pub use json::{extract_json, ExtractError};
pub use mock::{MockMode, MockProvider};
pub use remote::RemoteChatProvider;
pub use retry::{RateLimiter, RetryPolicy};

/// Marker preceding the case payload in every user prompt. Everything after
/// its last occurrence is the case being asked about.
pub const CASE_MARKER: &str = "### Input\n";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected credentials: {0}")]
    Auth(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("no mock reply registered for fingerprint {0}")]
    UnknownFingerprint(Fingerprint),
    #[error("audit log {path}: {message}")]
    Audit { path: PathBuf, message: String },
}

impl LlmError {
    /// Whether the failure came from the provider being unreachable or
    /// rejecting us, as opposed to a malformed request.
    pub fn is_provider_failure(&self) -> bool {
        !matches!(self, LlmError::InvalidRequest(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
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

/// Stable 64-bit FNV-1a hash over the role and content of every message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint(pub u64);

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::str::FromStr for Fingerprint {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(Fingerprint)
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        ChatRequest { messages }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            None => Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => Err(LlmError::InvalidRequest(
                "first message must come from system or user".into(),
            )),
            Some(_) => Ok(()),
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = FnvHasher::default();
        for m in &self.messages {
            h.write(m.role.as_str().as_bytes());
            h.write(&[0]);
            h.write(m.content.as_bytes());
            h.write(&[0]);
        }
        Fingerprint(h.finish())
    }

    /// The text following the last [`CASE_MARKER`] in the latest user
    /// message that has one.
    pub fn case_payload(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .filter(|m| m.role == Role::User)
            .find_map(|m| {
                m.content
                    .rfind(CASE_MARKER)
                    .map(|pos| &m.content[pos + CASE_MARKER.len()..])
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: Option<String>,
    pub usage: Option<TokenUsage>,
    pub latency: Duration,
    pub attempts: u32,
}

impl ChatResponse {
    pub fn immediate(content: impl Into<String>) -> Self {
        ChatResponse {
            content: content.into(),
            finish_reason: Some("stop".into()),
            usage: None,
            latency: Duration::ZERO,
            attempts: 1,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn model(&self) -> &str;

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;

    /// Supplies the correct answer for a request. Only oracle-backed mocks
    /// use it; real providers ignore it.
    fn register_oracle(&self, _fingerprint: Fingerprint, _reply: &str) {}
}

impl<T: ChatProvider + ?Sized> ChatProvider for Arc<T> {
    fn model(&self) -> &str {
        (**self).model()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }

    fn register_oracle(&self, fingerprint: Fingerprint, reply: &str) {
        (**self).register_oracle(fingerprint, reply)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteChat,
    Mock,
}

/// How an unregistered request is answered by the mock provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum MockFallback {
    Strict,
    Default(String),
    Echo,
    Fill(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmProviderConfig {
    pub provider: ProviderKind,
    pub model: String,
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<u32>,
    /// JSON object mapping hex fingerprints to canned replies.
    pub mock_fixtures: Option<PathBuf>,
    pub mock_fallback: MockFallback,
}

impl Default for LlmProviderConfig {
    fn default() -> Self {
        LlmProviderConfig {
            provider: ProviderKind::Mock,
            model: "gpt-4o-2024-08-06".into(),
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "LLM_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
            requests_per_minute: None,
            mock_fixtures: None,
            mock_fallback: MockFallback::Echo,
        }
    }
}

impl LlmProviderConfig {
    /// Overrides endpoint and model from `LLM_API_URL` and `LLM_MODEL`.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var("LLM_API_URL") {
            self.endpoint = url;
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            self.model = model;
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config("temperature must be >= 0".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(LlmError::Config("retry.max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}

/// Instantiates the provider described by `cfg`.
pub fn build_provider(cfg: &LlmProviderConfig) -> Result<Arc<dyn ChatProvider>, LlmError> {
    cfg.validate()?;
    Ok(match cfg.provider {
        ProviderKind::Mock => {
            let mut mock = MockProvider::new(&cfg.model, MockMode::from(cfg.mock_fallback.clone()));
            if let Some(path) = &cfg.mock_fixtures {
                mock = mock.with_fixture_file(path)?;
            }
            Arc::new(mock)
        }
        ProviderKind::RemoteChat => {
            let key = std::env::var(&cfg.api_key_env).ok();
            Arc::new(RemoteChatProvider::new(cfg.clone(), key))
        }
    })
}

/// One-shot convenience: build the provider and send `req`.
pub fn complete_chat(cfg: &LlmProviderConfig, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
    build_provider(cfg)?.complete(req)
}
