//! Rule-driven simulated model used by the `scripted:<name>` backends.
//!
//! A playbook maps a question (and optionally a distinguishing chunk) to
//! a fixed behaviour in each protocol: the answer given under plain CoT,
//! under the FC-style prompt, and the calculator plan followed as an
//! agent. Replies are a pure function of the request, so runs are
//! reproducible regardless of call order or parallelism.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{enforce_tool_choice, Backend, BackendError, ChatMessage, ChatRequest, Role, ToolCall, ToolChoice};
use crate::text::parse_number;

/// Opening words of the critic-style continuation prompts.
const CRITIC_PREFIXES: [&str; 4] = ["Calculator returned:", "Previous result (", "You repeated:", "Verify in words:"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaybookEntry {
    /// Substring of the first user message selecting this entry.
    pub question: String,
    /// Further restricts the entry to requests where some chunk contains
    /// this substring (used to give noisy variants their own behaviour).
    #[serde(default)]
    pub when_chunk_contains: Option<String>,
    /// Calculator plan, one expression per tool round.
    pub steps: Vec<String>,
    /// Tool rounds performed before the agent tries to answer.
    #[serde(default)]
    pub agent_calls: Option<usize>,
    /// Expressions issued after each continuation prompt; empty means the
    /// agent repeats its last expression.
    #[serde(default)]
    pub on_continue: Vec<String>,
    /// Replaces `on_continue` when the continuation prompt is critic-style.
    #[serde(default)]
    pub on_critic: Option<Vec<String>>,
    /// Substrings identifying the chunks cited as evidence.
    pub evidence: Vec<String>,
    /// Citation override used in agent mode.
    #[serde(default)]
    pub agent_evidence: Option<Vec<String>>,
    pub cot_answer: String,
    pub fcstyle_answer: String,
    /// Answer produced when no tool output is usable.
    pub guess: String,
    /// Answer the agent gives regardless of tool outputs.
    #[serde(default)]
    pub agent_answer: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Playbook {
    pub name: String,
    pub entries: Vec<PlaybookEntry>,
}

impl Playbook {
    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map_err(|e| BackendError::Playbook(e.to_string()))
    }

    /// The bundled playbook matching the toy corpus.
    pub fn demo() -> Self {
        Self::from_json(include_str!("../../assets/demo_playbook.json")).expect("bundled playbook parses")
    }

    /// Looks up a bundled playbook by name.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "demo" => Some(Self::demo()),
            _ => None,
        }
    }
}

pub struct PlaybookBackend {
    playbook: Playbook,
}

impl PlaybookBackend {
    pub fn new(playbook: Playbook) -> Self {
        Self { playbook }
    }
}

/// `[n] text` lines of a numbered-chunk listing.
fn numbered_chunks(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .filter_map(|line| {
            let rest = line.trim_start().strip_prefix('[')?;
            let (num, body) = rest.split_once(']')?;
            Some((num.trim().parse().ok()?, body.trim()))
        })
        .collect()
}

fn cite(chunks: &[(usize, &str)], needles: &[String]) -> Vec<usize> {
    chunks
        .iter()
        .filter(|(_, t)| needles.iter().any(|n| t.contains(n.as_str())))
        .map(|(i, _)| *i)
        .collect()
}

enum Mode {
    Cot,
    FcStyle,
    Agent,
}

impl PlaybookBackend {
    fn entry_for(&self, user: &str, chunks: &[(usize, &str)]) -> Option<&PlaybookEntry> {
        let candidates = self.playbook.entries.iter().filter(|e| user.contains(e.question.as_str()));
        let mut fallback = None;
        for e in candidates {
            match &e.when_chunk_contains {
                Some(needle) if chunks.iter().any(|(_, t)| t.contains(needle.as_str())) => return Some(e),
                Some(_) => {}
                None => {
                    fallback.get_or_insert(e);
                }
            }
        }
        fallback
    }

    fn respond(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        let user = req
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .ok_or_else(|| BackendError::Playbook("request has no user message".into()))?;
        let chunks = numbered_chunks(user);
        let entry = self
            .entry_for(user, &chunks)
            .ok_or_else(|| BackendError::Playbook("no playbook entry matches the question".into()))?;

        let assistant_turns = req.messages.iter().filter(|m| m.role == Role::Assistant).count();
        let mode = if req.tools.is_empty() {
            Mode::Cot
        } else if req.tool_choice == ToolChoice::None && assistant_turns == 0 {
            Mode::FcStyle
        } else {
            Mode::Agent
        };
        let evidence = cite(&chunks, &entry.evidence);
        match mode {
            Mode::Cot => {
                let body = json!({
                    "calc_chain": format!("{} <{}>", entry.steps.join("; "), entry.cot_answer),
                    "evidence_ids": evidence,
                    "final_answer": entry.cot_answer,
                });
                Ok(ChatMessage::assistant(body.to_string()))
            }
            Mode::FcStyle => {
                let body = json!({
                    "evidence_ids": evidence,
                    "final_answer": entry.fcstyle_answer,
                    "reasoning": format!("Worked from chunks {evidence:?} without tools."),
                });
                Ok(ChatMessage::assistant(body.to_string()))
            }
            Mode::Agent => Ok(self.agent_turn(req, entry, &chunks, evidence)),
        }
    }

    fn agent_turn(
        &self,
        req: &ChatRequest,
        entry: &PlaybookEntry,
        chunks: &[(usize, &str)],
        evidence: Vec<usize>,
    ) -> ChatMessage {
        let rounds: Vec<&ChatMessage> = req.messages.iter().filter(|m| m.has_tool_calls()).collect();
        let done = rounds.len();
        let continuations: Vec<&str> = req
            .messages
            .iter()
            .filter(|m| m.role == Role::User)
            .skip(1)
            .map(|m| m.content.as_str())
            .collect();
        let planned = entry.agent_calls.unwrap_or(entry.steps.len());
        let allowed = planned + continuations.len();
        let wants_call = match req.tool_choice {
            ToolChoice::None => false,
            ToolChoice::Required => true,
            ToolChoice::Auto => done < allowed,
        };
        if wants_call {
            let expr = if done < planned.min(entry.steps.len()) {
                entry.steps[done].clone()
            } else {
                let critic = continuations
                    .last()
                    .is_some_and(|c| CRITIC_PREFIXES.iter().any(|p| c.starts_with(p)));
                let follow_ups = match (&entry.on_critic, critic) {
                    (Some(list), true) => list,
                    _ => &entry.on_continue,
                };
                let j = done.saturating_sub(planned);
                follow_ups
                    .get(j)
                    .or(follow_ups.last())
                    .cloned()
                    .or_else(|| {
                        rounds
                            .last()
                            .and_then(|m| m.calls().first())
                            .and_then(|c| serde_json::from_str::<serde_json::Value>(&c.arguments).ok())
                            .and_then(|v| v["expression"].as_str().map(str::to_string))
                    })
                    .unwrap_or_else(|| entry.steps.first().cloned().unwrap_or_default())
            };
            let call = ToolCall::new(format!("call_{done}"), "calculate", json!({ "expression": expr }).to_string());
            return ChatMessage::assistant_calls("", vec![call]);
        }

        let last_output = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::Tool)
            .map(|m| m.content.trim().to_string());
        let answer = entry.agent_answer.clone().unwrap_or_else(|| match &last_output {
            Some(out) if parse_number(out).is_some() => out.clone(),
            _ => entry.guess.clone(),
        });
        let cited = match &entry.agent_evidence {
            Some(needles) => cite(chunks, needles),
            None => evidence,
        };
        let body = json!({
            "evidence_ids": cited,
            "final_answer": answer,
            "reasoning": format!(
                "Used chunks {cited:?}; ran {done} calculator step(s); last result {}.",
                last_output.as_deref().unwrap_or("none")
            ),
        });
        ChatMessage::assistant(body.to_string())
    }
}

impl Backend for PlaybookBackend {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        req.validate()?;
        enforce_tool_choice(req, self.respond(req)?)
    }

    fn describe(&self) -> String {
        format!("scripted:{}", self.playbook.name)
    }
}
