//! Chat backends with tool-call support.
//!
//! Every backend answers a [`ChatRequest`] with exactly one assistant
//! [`ChatMessage`]. The tool-choice contract is enforced uniformly by
//! [`enforce_tool_choice`], so harness behaviour does not depend on which
//! backend produced a reply.

mod http;
mod playbook;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::{HttpBackend, RetryPolicy};
pub use playbook::{Playbook, PlaybookBackend, PlaybookEntry};
pub use scripted::{RequestFingerprint, ScriptedBackend};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("authentication failed ({status})")]
    Auth { status: u16 },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed reply: {0}")]
    Schema(String),
    #[error("required tool call missing")]
    RequiredToolCallMissing,
    #[error("script exhausted after {calls} calls")]
    ScriptExhausted { calls: usize },
    #[error("fingerprint mismatch on call {call}: {field} differs")]
    FingerprintMismatch { call: usize, field: &'static str },
    #[error("no scripted reply for request fingerprint {0}")]
    UnknownFingerprint(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("playbook: {0}")]
    Playbook(String),
}

impl BackendError {
    /// Transient failures worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// Serialized JSON object.
    pub arguments: String,
}

impl ToolCall {
    pub fn new(id: impl Into<String>, name: impl Into<String>, arguments: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            arguments: arguments.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_calls: Option<Vec<ToolCall>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: None,
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_calls(content: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
            tool_calls: Some(calls),
            tool_call_id: None,
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_calls: None,
            tool_call_id: Some(call_id.into()),
        }
    }

    pub fn has_tool_calls(&self) -> bool {
        self.tool_calls.as_ref().is_some_and(|c| !c.is_empty())
    }

    pub fn calls(&self) -> &[ToolCall] {
        self.tool_calls.as_deref().unwrap_or(&[])
    }

    /// Checks the role-dependent field invariants.
    pub fn check(&self) -> Result<(), String> {
        if self.tool_calls.is_some() && self.role != Role::Assistant {
            return Err(format!("tool_calls on a {:?} message", self.role));
        }
        if self.tool_call_id.is_some() && self.role != Role::Tool {
            return Err(format!("tool_call_id on a {:?} message", self.role));
        }
        Ok(())
    }
}

/// A tool declaration as offered to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolChoice {
    Auto,
    Required,
    None,
}

impl ToolChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolChoice::Auto => "auto",
            ToolChoice::Required => "required",
            ToolChoice::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolSchema>,
    pub tool_choice: ToolChoice,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| BackendError::InvalidRequest("messages is empty".into()))?;
        if first.role != Role::System {
            return Err(BackendError::InvalidRequest("first message must be system".into()));
        }
        for m in &self.messages {
            m.check().map_err(BackendError::InvalidRequest)?;
        }
        Ok(())
    }

    pub fn system_prompt(&self) -> &str {
        &self.messages[0].content
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }

    /// Hex SHA-256 of the canonical JSON of the whole request.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("request serializes"))
    }
}

pub(crate) fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Applies the tool-choice contract to a raw assistant reply.
///
/// `required` with no tool call is an error; `none` drops any tool calls
/// the backend produced anyway.
pub fn enforce_tool_choice(req: &ChatRequest, mut msg: ChatMessage) -> Result<ChatMessage, BackendError> {
    if msg.role != Role::Assistant {
        return Err(BackendError::Schema(format!("expected assistant reply, got {:?}", msg.role)));
    }
    msg.tool_call_id = None;
    match req.tool_choice {
        ToolChoice::Required if !msg.has_tool_calls() => Err(BackendError::RequiredToolCallMissing),
        ToolChoice::None => {
            msg.tool_calls = None;
            Ok(msg)
        }
        _ => {
            if msg.tool_calls.as_ref().is_some_and(|c| c.is_empty()) {
                msg.tool_calls = None;
            }
            Ok(msg)
        }
    }
}

/// Uniform chat interface. Implementations must be safe to call from
/// several worker threads at once.
pub trait Backend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError>;

    /// Short identifier recorded in run metadata.
    fn describe(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        (**self).chat(req)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        (**self).chat(req)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Backend driven by a closure; handy for tests and simulated generators.
pub struct FnBackend<F> {
    name: String,
    respond: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatMessage, BackendError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, respond: F) -> Self {
        Self {
            name: name.into(),
            respond,
        }
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<ChatMessage, BackendError> + Send + Sync,
{
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        req.validate()?;
        enforce_tool_choice(req, (self.respond)(req)?)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

impl fmt::Display for ToolChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
