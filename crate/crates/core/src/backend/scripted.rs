//! Deterministic replay backend for offline runs and tests.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{enforce_tool_choice, sha256_hex, Backend, BackendError, ChatMessage, ChatRequest, ToolChoice};

/// Field-wise digest of a request. Unset fields are not compared, so a
/// script can pin only the parts it cares about.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFingerprint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tools: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_choice: Option<ToolChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

impl RequestFingerprint {
    pub fn of(req: &ChatRequest) -> Self {
        Self {
            system: Some(sha256_hex(req.system_prompt())),
            tools: Some(sha256_hex(&serde_json::to_string(&req.tools).expect("tools serialize"))),
            tool_choice: Some(req.tool_choice),
            transcript: Some(sha256_hex(
                &serde_json::to_string(&req.messages[1..]).expect("messages serialize"),
            )),
        }
    }

    /// First field where `actual` departs from this expectation.
    pub fn divergence(&self, actual: &RequestFingerprint) -> Option<&'static str> {
        fn differs<T: PartialEq>(want: &Option<T>, got: &Option<T>) -> bool {
            want.is_some() && want != got
        }
        if differs(&self.system, &actual.system) {
            Some("system prompt")
        } else if differs(&self.tools, &actual.tools) {
            Some("tools")
        } else if differs(&self.tool_choice, &actual.tool_choice) {
            Some("tool_choice")
        } else if differs(&self.transcript, &actual.transcript) {
            Some("transcript")
        } else {
            None
        }
    }

    /// Single digest over all fields, used as a lookup key.
    pub fn key(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("fingerprint serializes"))
    }
}

#[derive(Debug)]
enum Script {
    Sequence(Vec<(Option<RequestFingerprint>, ChatMessage)>),
    Keyed(HashMap<String, ChatMessage>),
}

#[derive(Debug, Default)]
struct ReplayState {
    cursor: usize,
    log: Vec<ChatRequest>,
}

/// Replays canned assistant messages.
///
/// Sequence scripts return replies in order and fail once exhausted; in
/// strict mode each step also checks the request against an expected
/// fingerprint. Keyed scripts look replies up by the full request
/// fingerprint, which makes them independent of call order.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    script: Script,
    state: Mutex<ReplayState>,
}

impl ScriptedBackend {
    pub fn sequence(replies: Vec<ChatMessage>) -> Self {
        Self::build("scripted:sequence", Script::Sequence(replies.into_iter().map(|m| (None, m)).collect()))
    }

    pub fn strict(steps: Vec<(RequestFingerprint, ChatMessage)>) -> Self {
        Self::build(
            "scripted:strict",
            Script::Sequence(steps.into_iter().map(|(f, m)| (Some(f), m)).collect()),
        )
    }

    pub fn keyed(entries: Vec<(RequestFingerprint, ChatMessage)>) -> Self {
        Self::build(
            "scripted:keyed",
            Script::Keyed(entries.into_iter().map(|(f, m)| (f.key(), m)).collect()),
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn build(name: &str, script: Script) -> Self {
        Self {
            name: name.to_string(),
            script,
            state: Mutex::new(ReplayState::default()),
        }
    }

    /// Every request received so far, in arrival order.
    pub fn request_log(&self) -> Vec<ChatRequest> {
        self.state.lock().expect("replay lock").log.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("replay lock").log.len()
    }
}

impl Backend for ScriptedBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        req.validate()?;
        let mut state = self.state.lock().expect("replay lock");
        state.log.push(req.clone());
        let call = state.log.len();
        let reply = match &self.script {
            Script::Sequence(steps) => {
                let Some((expect, reply)) = steps.get(state.cursor) else {
                    return Err(BackendError::ScriptExhausted { calls: state.cursor });
                };
                if let Some(expect) = expect {
                    if let Some(field) = expect.divergence(&RequestFingerprint::of(req)) {
                        return Err(BackendError::FingerprintMismatch { call, field });
                    }
                }
                state.cursor += 1;
                reply.clone()
            }
            Script::Keyed(map) => {
                let key = RequestFingerprint::of(req).key();
                map.get(&key)
                    .cloned()
                    .ok_or(BackendError::UnknownFingerprint(key))?
            }
        };
        drop(state);
        enforce_tool_choice(req, reply)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ToolCall;

    fn req(system: &str, choice: ToolChoice) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::system(system), ChatMessage::user("q")],
            tools: vec![],
            tool_choice: choice,
            temperature: 0.0,
            seed: None,
        }
    }

    fn calc_call() -> ChatMessage {
        ChatMessage::assistant_calls(
            "",
            vec![ToolCall::new("call_0", "calculate", r#"{"expression":"48/2"}"#)],
        )
    }

    #[test]
    fn replays_in_order_then_exhausts() {
        let b = ScriptedBackend::sequence(vec![
            ChatMessage::assistant("a"),
            ChatMessage::assistant("b"),
            ChatMessage::assistant("c"),
        ]);
        let r = req("s", ToolChoice::Auto);
        let got: Vec<String> = (0..3).map(|_| b.chat(&r).unwrap().content).collect();
        assert_eq!(got, vec!["a", "b", "c"]);
        assert!(matches!(b.chat(&r), Err(BackendError::ScriptExhausted { calls: 3 })));
        assert_eq!(b.request_log().len(), 4);
    }

    #[test]
    fn primed_calculator_call() {
        let b = ScriptedBackend::sequence(vec![calc_call()]);
        let msg = b.chat(&req("s", ToolChoice::Auto)).unwrap();
        let calls = msg.calls();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].name, "calculate");
        assert_eq!(calls[0].arguments, r#"{"expression":"48/2"}"#);
    }

    #[test]
    fn tool_choice_contract_applies_to_replays() {
        let b = ScriptedBackend::sequence(vec![ChatMessage::assistant("72"), calc_call()]);
        let err = b.chat(&req("s", ToolChoice::Required)).unwrap_err();
        assert_eq!(err.to_string(), "required tool call missing");
        let msg = b.chat(&req("s", ToolChoice::None)).unwrap();
        assert!(!msg.has_tool_calls());
    }

    #[test]
    fn strict_mode_names_divergent_field() {
        let expected = RequestFingerprint::of(&req("expected system", ToolChoice::Auto));
        let b = ScriptedBackend::strict(vec![(expected, ChatMessage::assistant("x"))]);
        let err = b.chat(&req("other system", ToolChoice::Auto)).unwrap_err();
        assert!(err.to_string().contains("system prompt"), "{err}");
    }

    #[test]
    fn strict_mode_partial_expectation() {
        let expected = RequestFingerprint {
            tool_choice: Some(ToolChoice::None),
            ..Default::default()
        };
        let b = ScriptedBackend::strict(vec![(expected, ChatMessage::assistant("x"))]);
        let err = b.chat(&req("any", ToolChoice::Auto)).unwrap_err();
        assert!(err.to_string().contains("tool_choice"));
    }

    #[test]
    fn keyed_lookup_ignores_order() {
        let r1 = req("one", ToolChoice::Auto);
        let r2 = req("two", ToolChoice::Auto);
        let b = ScriptedBackend::keyed(vec![
            (RequestFingerprint::of(&r1), ChatMessage::assistant("1")),
            (RequestFingerprint::of(&r2), ChatMessage::assistant("2")),
        ]);
        assert_eq!(b.chat(&r2).unwrap().content, "2");
        assert_eq!(b.chat(&r1).unwrap().content, "1");
        assert_eq!(b.chat(&r1).unwrap().content, "1");
        assert!(matches!(b.chat(&req("three", ToolChoice::Auto)), Err(BackendError::UnknownFingerprint(_))));
        assert_eq!(b.calls(), 4);
    }
}
