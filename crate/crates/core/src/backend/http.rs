//! Chat-completions HTTP backend.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{enforce_tool_choice, Backend, BackendError, ChatMessage, ChatRequest, Role, ToolCall};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "TOOLGAP_API_KEY";

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

pub struct HttpBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
    retries: AtomicU64,
}

impl HttpBackend {
    /// `endpoint` is either the full chat-completions URL or an API base
    /// (for example `http://host:8000/v1`), to which `/chat/completions`
    /// is appended.
    pub fn new(endpoint: &str, model: &str, api_key: Option<String>) -> Result<Self, BackendError> {
        let trimmed = endpoint.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            url,
            model: model.to_string(),
            api_key,
            retry: RetryPolicy::default(),
            client,
            retries: AtomicU64::new(0),
        })
    }

    /// Reads the key from `TOOLGAP_API_KEY` when set.
    pub fn from_env(endpoint: &str, model: &str) -> Result<Self, BackendError> {
        Self::new(endpoint, model, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Total number of retried attempts since construction.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Request body in the chat-completions wire schema.
    pub fn wire_body(&self, req: &ChatRequest) -> Value {
        let messages: Vec<Value> = req.messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
        });
        if !req.tools.is_empty() {
            body["tools"] = Value::Array(
                req.tools
                    .iter()
                    .map(|t| {
                        json!({
                            "type": "function",
                            "function": {
                                "name": t.name,
                                "description": t.description,
                                "parameters": t.parameters,
                            }
                        })
                    })
                    .collect(),
            );
            body["tool_choice"] = json!(req.tool_choice.as_str());
        }
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn send_once(&self, body: &Value) -> Result<Value, BackendError> {
        let mut rb = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            rb = rb.bearer_auth(key);
        }
        let resp = rb.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| BackendError::Schema(e.to_string())),
            401 | 403 => Err(BackendError::Auth { status }),
            _ => Err(BackendError::Status { status, body: text }),
        }
    }
}

fn wire_message(m: &ChatMessage) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({ "role": role, "content": m.content });
    if let Some(calls) = m.tool_calls.as_ref().filter(|c| !c.is_empty()) {
        v["tool_calls"] = Value::Array(
            calls
                .iter()
                .map(|c| {
                    json!({
                        "id": c.id,
                        "type": "function",
                        "function": { "name": c.name, "arguments": c.arguments },
                    })
                })
                .collect(),
        );
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

/// Extracts the assistant message from a chat-completions reply.
pub fn parse_reply(reply: &Value) -> Result<ChatMessage, BackendError> {
    let choices = reply
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Schema("reply missing \"choices\"".into()))?;
    let message = choices
        .first()
        .and_then(|c| c.get("message"))
        .ok_or_else(|| BackendError::Schema("reply has no choices[0].message".into()))?;
    let content = match message.get("content") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(BackendError::Schema(format!("unexpected content type: {other}"))),
    };
    let mut calls = Vec::new();
    if let Some(raw_calls) = message.get("tool_calls").and_then(Value::as_array) {
        for (i, c) in raw_calls.iter().enumerate() {
            let function = c
                .get("function")
                .ok_or_else(|| BackendError::Schema(format!("tool_calls[{i}] missing function")))?;
            let name = function
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| BackendError::Schema(format!("tool_calls[{i}] missing name")))?;
            let arguments = match function.get("arguments") {
                Some(Value::String(s)) => s.clone(),
                Some(v @ Value::Object(_)) => v.to_string(),
                None | Some(Value::Null) => "{}".to_string(),
                Some(other) => return Err(BackendError::Schema(format!("bad arguments: {other}"))),
            };
            let id = c
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("call_{i}"));
            calls.push(ToolCall::new(id, name, arguments));
        }
    }
    Ok(if calls.is_empty() {
        ChatMessage::assistant(content)
    } else {
        ChatMessage::assistant_calls(content, calls)
    })
}

impl Backend for HttpBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        req.validate()?;
        let body = self.wire_body(req);
        let attempts = self.retry.attempts.max(1);
        let mut delay = self.retry.base_delay;
        let mut last_err = None;
        for attempt in 1..=attempts {
            if attempt > 1 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                thread::sleep(delay);
                delay *= 2;
            }
            match self.send_once(&body) {
                Ok(reply) => return enforce_tool_choice(req, parse_reply(&reply)?),
                Err(BackendError::Status { status: 429, .. }) => {
                    log::warn!("rate limited by {} (attempt {attempt}/{attempts})", self.url);
                    last_err = Some(BackendError::RateLimited { attempts });
                }
                Err(e) if e.is_retryable() => {
                    log::warn!("transient failure from {}: {e} (attempt {attempt}/{attempts})", self.url);
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

    fn describe(&self) -> String {
        format!("http:{}", self.model)
    }
}
