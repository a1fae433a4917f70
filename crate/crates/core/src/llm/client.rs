//! Blocking chat-completion client with retry and usage accounting.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::policy::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub endpoint: String,
    pub model: String,
    pub max_retries: u32,
    pub timeout_ms: u64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    /// Extra model calls after an unparseable answer.
    pub parse_retries: u32,
    pub planner_temperature: f64,
    pub reflector_temperature: f64,
    pub operator_temperature: f64,
    pub judge_temperature: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model: "gpt-4o".to_string(),
            max_retries: 3,
            timeout_ms: 60_000,
            api_key_env: Some("OPENAI_API_KEY".to_string()),
            backoff_base_ms: 500,
            max_in_flight: 4,
            parse_retries: 2,
            planner_temperature: 0.7,
            reflector_temperature: 0.7,
            operator_temperature: 0.0,
            judge_temperature: 0.0,
        }
    }
}

impl AdapterConfig {
    pub fn temperature(&self, role: Role) -> f64 {
        match role {
            Role::Planner => self.planner_temperature,
            Role::Reflector => self.reflector_temperature,
            Role::Operator => self.operator_temperature,
            Role::MicroJudge | Role::MacroJudge => self.judge_temperature,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.timeout_ms == 0 {
            return Err(ClientError::Config("timeout must be positive".into()));
        }
        if self.endpoint.trim().is_empty() {
            return Err(ClientError::Config("endpoint is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("endpoint unavailable after {attempts} attempts: {last}")]
    EndpointUnavailable { attempts: u32, last: String },
    #[error("endpoint rejected the request with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("invalid adapter configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Thread-safe per-role token counters.
#[derive(Debug, Default)]
pub struct UsageMeter {
    inner: Mutex<BTreeMap<Role, TokenUsage>>,
}

impl UsageMeter {
    pub fn record(&self, role: Role, prompt: u64, completion: u64) {
        let mut m = self.inner.lock().expect("usage meter poisoned");
        let u = m.entry(role).or_default();
        u.calls += 1;
        u.prompt_tokens += prompt;
        u.completion_tokens += completion;
    }

    pub fn snapshot(&self) -> BTreeMap<Role, TokenUsage> {
        self.inner.lock().expect("usage meter poisoned").clone()
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

pub struct ChatClient {
    cfg: AdapterConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    gate: Gate,
    usage: Arc<UsageMeter>,
}

impl ChatClient {
    pub fn new(cfg: AdapterConfig, usage: Arc<UsageMeter>) -> Result<Self, ClientError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .new_agent();
        let api_key = cfg
            .api_key_env
            .as_deref()
            .and_then(|v| std::env::var(v).ok())
            .filter(|k| !k.is_empty());
        Ok(ChatClient {
            gate: Gate {
                free: Mutex::new(cfg.max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            cfg,
            agent,
            api_key,
            usage,
        })
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.cfg
    }

    pub fn usage(&self) -> &Arc<UsageMeter> {
        &self.usage
    }

    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.cfg.backoff_base_ms.saturating_mul(1u64 << attempt.min(16)))
    }

    fn once(&self, body: &Value) -> Result<Result<Completion, ClientError>, String> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(format!("transport error: {e}")),
        };
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| format!("reading body failed: {e}"))?;
        if status == 429 || status >= 500 {
            return Err(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Ok(Err(ClientError::Rejected { status, body: text }));
        }
        Ok(parse_completion(&text))
    }

    /// POST `messages`, retrying transport failures, 5xx and 429.
    pub fn complete(&self, role: Role, messages: &[ChatMessage]) -> Result<Completion, ClientError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": self.cfg.temperature(role),
        });
        let _permit = self.gate.acquire();
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.backoff(attempt - 1));
            }
            match self.once(&body) {
                Ok(Ok(mut c)) => {
                    c.attempts = attempt + 1;
                    self.usage.record(role, c.prompt_tokens, c.completion_tokens);
                    return Ok(c);
                }
                Ok(Err(e)) => return Err(e),
                Err(e) => {
                    log::debug!("{role} request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(ClientError::EndpointUnavailable { attempts, last })
    }
}

fn parse_completion(text: &str) -> Result<Completion, ClientError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ClientError::BadResponse(e.to_string()))?;
    let content = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ClientError::BadResponse("missing choices[0].message.content".into()))?;
    let tok = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(Completion {
        text: content.to_string(),
        prompt_tokens: tok("prompt_tokens"),
        completion_tokens: tok("completion_tokens"),
        attempts: 1,
    })
}
