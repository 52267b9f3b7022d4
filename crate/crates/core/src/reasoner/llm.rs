//! OpenAI-compatible chat-completions client.

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;
use tokio::sync::Semaphore;

pub const ENV_BASE_URL: &str = "TQK_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "TQK_LLM_API_KEY";
pub const ENV_MODEL: &str = "TQK_LLM_MODEL";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Clone)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl fmt::Debug for LlmEndpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmEndpoint")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .field("temperature", &self.temperature)
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff", &self.backoff)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

impl LlmEndpoint {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        LlmEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            api_key: api_key.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 8,
        }
    }

    /// Reads `TQK_LLM_BASE_URL`, `TQK_LLM_API_KEY` and optionally
    /// `TQK_LLM_MODEL`.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        let (Some(base_url), Some(api_key)) = (get(ENV_BASE_URL), get(ENV_API_KEY)) else {
            return Err(LlmError::NotConfigured);
        };
        Ok(LlmEndpoint::new(base_url, api_key, get(ENV_MODEL).unwrap_or_else(|| DEFAULT_MODEL.to_string())))
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn delay(&self, retry: u32) -> Duration {
        self.backoff.saturating_mul(2u32.saturating_pow(retry))
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("endpoint not configured")]
    NotConfigured,
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("HTTP {status} after {attempts} attempts: {body}")]
    Http { status: u16, attempts: u32, body: String },
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
}

impl LlmError {
    /// Pipeline stage label for this failure.
    pub fn stage(&self) -> &'static str {
        match self {
            LlmError::NotConfigured | LlmError::Auth { .. } => "auth",
            _ => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub retries: u32,
}

#[async_trait]
pub trait LanguageModel: Send + Sync {
    async fn complete(&self, prompt: &str) -> Result<Completion, LlmError>;
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub struct OpenAiClient {
    endpoint: LlmEndpoint,
    http: reqwest::Client,
    permits: Arc<Semaphore>,
}

impl OpenAiClient {
    pub fn new(endpoint: LlmEndpoint) -> Result<Self, LlmError> {
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| LlmError::Transport { attempts: 0, message: e.to_string() })?;
        let permits = Arc::new(Semaphore::new(endpoint.max_in_flight.max(1)));
        Ok(OpenAiClient { endpoint, http, permits })
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }
}

enum Attempt {
    Done(Result<String, LlmError>),
    Retry(LlmError),
}

impl OpenAiClient {
    async fn attempt(&self, prompt: &str, attempts: u32) -> Attempt {
        let body = ChatRequest {
            model: &self.endpoint.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: self.endpoint.temperature,
        };
        let response = self.http.post(self.endpoint.url()).bearer_auth(&self.endpoint.api_key).json(&body).send().await;
        let response = match response {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts }),
            Err(e) => return Attempt::Retry(LlmError::Transport { attempts, message: e.to_string() }),
        };
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Attempt::Done(Err(LlmError::Auth { status: status.as_u16() }));
        }
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(LlmError::Timeout { attempts }),
            Err(e) => return Attempt::Retry(LlmError::Transport { attempts, message: e.to_string() }),
        };
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Attempt::Retry(LlmError::Http { status: status.as_u16(), attempts, body: text });
        }
        if !status.is_success() {
            return Attempt::Done(Err(LlmError::Http { status: status.as_u16(), attempts, body: text }));
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Done(Err(LlmError::Malformed(e.to_string()))),
        };
        let content = parsed.choices.into_iter().next().and_then(|c| c.message.content);
        Attempt::Done(content.ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into())))
    }
}

#[async_trait]
impl LanguageModel for OpenAiClient {
    async fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let mut retries = 0;
        loop {
            match self.attempt(prompt, retries + 1).await {
                Attempt::Done(result) => return result.map(|text| Completion { text, retries }),
                Attempt::Retry(err) if retries >= self.endpoint.max_retries => return Err(err),
                Attempt::Retry(err) => {
                    tracing::warn!(retry = retries + 1, error = %err, "retrying completion");
                    tokio::time::sleep(self.endpoint.delay(retries)).await;
                    retries += 1;
                }
            }
        }
    }
}

/// Returns canned completions in order, repeating the last one.
#[derive(Debug, Clone)]
pub struct ScriptedModel {
    replies: Vec<String>,
    next: Arc<std::sync::atomic::AtomicUsize>,
}

impl ScriptedModel {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        ScriptedModel { replies: replies.into_iter().map(Into::into).collect(), next: Default::default() }
    }
}

#[async_trait]
impl LanguageModel for ScriptedModel {
    async fn complete(&self, _prompt: &str) -> Result<Completion, LlmError> {
        let i = self.next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        let text = self.replies.get(i).or(self.replies.last()).cloned().unwrap_or_default();
        Ok(Completion { text, retries: 0 })
    }
}
