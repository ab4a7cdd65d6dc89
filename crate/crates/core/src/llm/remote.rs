use std::time::Instant;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{ChatProvider, ChatRequest, ChatResponse, LlmError, LlmProviderConfig, Message, RateLimiter, TokenUsage};

/// OpenAI-style `/chat/completions` client.
///
/// HTTP 429, 5xx, timeouts and connection failures are retried under the
/// configured [`RetryPolicy`](super::RetryPolicy); 401/403 fail immediately.
pub struct RemoteChatProvider {
    cfg: LlmProviderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    limiter: Option<RateLimiter>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(LlmError),
}

impl RemoteChatProvider {
    pub fn new(cfg: LlmProviderConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = cfg.requests_per_minute.map(RateLimiter::per_minute);
        RemoteChatProvider {
            cfg,
            api_key,
            agent,
            limiter,
        }
    }

    fn attempt(&self, req: &ChatRequest) -> Result<(String, Option<String>, Option<TokenUsage>), Failure> {
        let mut call = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let body = WireRequest {
            model: &self.cfg.model,
            messages: &req.messages,
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
        };
        let mut response = call.send_json(&body).map_err(|e| match e {
            ureq::Error::BadUri(_) | ureq::Error::Http(_) => Failure::Fatal(LlmError::Config(e.to_string())),
            other => Failure::Retryable(other.to_string()),
        })?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => {
                return Err(Failure::Fatal(LlmError::Auth(format!("HTTP {status}"))));
            }
            429 | 500..=599 => return Err(Failure::Retryable(format!("HTTP {status}"))),
            _ => {
                let text = response.body_mut().read_to_string().unwrap_or_default();
                return Err(Failure::Fatal(LlmError::Config(format!("HTTP {status}: {text}"))));
            }
        }
        let wire: WireResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Failure::Retryable(format!("malformed response body: {e}")))?;
        let choice = wire
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| Failure::Retryable("response has no choices".into()))?;
        Ok((
            choice.message.content.unwrap_or_default(),
            choice.finish_reason,
            wire.usage,
        ))
    }
}

impl ChatProvider for RemoteChatProvider {
    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let policy = self.cfg.retry;
        let mut rng = rand::rng();
        let mut last = String::new();
        for attempt in 1..=policy.max_attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            let started = Instant::now();
            match self.attempt(req) {
                Ok((content, finish_reason, usage)) => {
                    let latency = started.elapsed();
                    debug!(
                        attempt,
                        latency_ms = latency.as_millis() as u64,
                        "chat completion succeeded"
                    );
                    return Ok(ChatResponse {
                        content,
                        finish_reason,
                        usage,
                        latency,
                        attempts: attempt,
                    });
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    warn!(
                        attempt,
                        max_attempts = policy.max_attempts,
                        latency_ms = started.elapsed().as_millis() as u64,
                        %message,
                        "chat completion attempt failed"
                    );
                    last = message;
                    if attempt < policy.max_attempts {
                        std::thread::sleep(policy.backoff(attempt - 1, &mut rng));
                    }
                }
            }
        }
        Err(LlmError::Transport {
            attempts: policy.max_attempts,
            message: last,
        })
    }
}
