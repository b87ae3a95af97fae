//! The seven intervention conditions, the agent loop, and the suite runner.

mod extract;
pub mod prompts;
mod store;
mod suite;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, ChatMessage, ChatRequest, ToolCall, ToolChoice};
use crate::corpus::{Sample, Task, Variant};
use crate::toolbox::{toolset_for, ToolMode, ToolResult, Toolbox};

pub use extract::{extract_prediction, Matcher, Prediction, NUMERIC_TOLERANCE};
pub use store::{StoredTrajectory, TrajectoryStore};
pub use suite::{
    build_pool, fingerprint, results_csv, run_labeled, run_suite, score_trajectory, ResultRow, ResultSet,
    SuiteOptions, SuiteOutput,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no Base sample for question '{0}'")]
    MissingBase(String),
    #[error("trajectory store: {0}")]
    Store(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Cot,
    FcStyle,
    Noop,
    Full,
    Max1,
    OracleCalc,
    OracleEvid,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::Cot,
        Condition::FcStyle,
        Condition::Noop,
        Condition::Full,
        Condition::Max1,
        Condition::OracleCalc,
        Condition::OracleEvid,
    ];

    /// Short identifier used on the command line and in files.
    pub fn id(self) -> &'static str {
        match self {
            Condition::Cot => "cot",
            Condition::FcStyle => "fcstyle",
            Condition::Noop => "noop",
            Condition::Full => "full",
            Condition::Max1 => "max1",
            Condition::OracleCalc => "oraclecalc",
            Condition::OracleEvid => "oracleevid",
        }
    }

    /// Name used in rendered tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Condition::Cot => "NoTool-CoT",
            Condition::FcStyle => "NoTool-FCStyle",
            Condition::Noop => "Agent-NoopTool",
            Condition::Full => "Agent-Full",
            Condition::Max1 => "Agent-Max1Turn",
            Condition::OracleCalc => "Agent-OracleCalc",
            Condition::OracleEvid => "Agent-OracleEvid",
        }
    }

    pub fn uses_tools(self) -> bool {
        !matches!(self, Condition::Cot | Condition::FcStyle)
    }

    fn tool_mode(self, sample: &Sample) -> ToolMode {
        match self {
            Condition::Noop => ToolMode::Noop,
            Condition::OracleCalc => ToolMode::OracleCalc {
                gold_answer: sample.gold_answer.clone(),
            },
            _ => ToolMode::Real,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        Condition::ALL
            .into_iter()
            .find(|c| c.id() == key || c.display_name().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown condition '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_turns: usize,
    pub matcher: Matcher,
    pub seed: Option<u64>,
    pub temperature: f64,
    /// Require a tool call on the first agent turn (gate data collection).
    #[serde(default)]
    pub force_first_tool: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_turns: 8,
            matcher: Matcher::Exact,
            seed: Some(0),
            temperature: 0.0,
            force_first_tool: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolExchange {
    pub call: ToolCall,
    pub result: ToolResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateAction {
    Continue,
    Commit,
}

/// One consultation of the gate at a termination attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    /// Assistant turn at which the attempt happened (1-based).
    pub turn: usize,
    pub p_continue: f64,
    pub action: GateAction,
    /// Why the action was taken (threshold, or the guard that fired).
    pub reason: String,
    /// Continuation prompt kind, when continuing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub condition: Condition,
    /// Set for gated runs ("gate", "gate_critic").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
    pub question_id: String,
    pub variant: Variant,
    pub messages: Vec<ChatMessage>,
    pub tool_calls: Vec<ToolExchange>,
    pub turns_used: usize,
    pub prediction: Prediction,
    pub raw_final: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub extra_turns_used: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gate_decisions: Vec<GateDecision>,
}

impl Trajectory {
    /// Key under which results of this trajectory are reported.
    pub fn label(&self) -> &str {
        self.arm.as_deref().unwrap_or(self.condition.id())
    }

    pub fn successful_calls(&self) -> usize {
        self.tool_calls.iter().filter(|x| x.result.is_success()).count()
    }
}

/// Snapshot offered to a termination policy each time the agent replies
/// without tool calls.
pub struct AttemptState<'a> {
    pub question: &'a str,
    pub chunks: &'a [&'a str],
    pub messages: &'a [ChatMessage],
    pub tool_calls: &'a [ToolExchange],
    pub turns_used: usize,
    pub max_turns: usize,
    pub extra_turns_used: usize,
    pub candidate: &'a Prediction,
    pub raw: &'a str,
    pub previous: Option<&'a Prediction>,
}

/// What a termination policy decided.
#[derive(Debug, Clone, Default)]
pub struct AttemptOutcome {
    pub record: Option<GateDecision>,
    /// Prompt injected as a user message to force another tool step.
    pub continuation: Option<String>,
}

/// Inputs of one agent loop.
pub struct AgentSpec<'a> {
    pub question: &'a str,
    pub chunks: Vec<&'a str>,
    pub system: &'a str,
    pub toolbox: Toolbox,
    /// Permit a single tool-call round, then demand the answer.
    pub single_round: bool,
}

pub struct LoopOutput {
    pub messages: Vec<ChatMessage>,
    pub tool_calls: Vec<ToolExchange>,
    pub turns_used: usize,
    pub prediction: Prediction,
    pub raw_final: String,
    pub error: Option<String>,
    pub extra_turns_used: usize,
    pub decisions: Vec<GateDecision>,
}

/// Runs the function-calling loop. `policy` is consulted at every
/// termination attempt; ungated conditions always commit.
pub fn agent_loop(
    spec: &AgentSpec<'_>,
    backend: &dyn Backend,
    config: &RunConfig,
    policy: &mut dyn FnMut(&AttemptState<'_>) -> AttemptOutcome,
) -> LoopOutput {
    let mut messages = vec![
        ChatMessage::system(spec.system),
        ChatMessage::user(prompts::user_message(spec.question, &spec.chunks)),
    ];
    let tools = spec.toolbox.schemas();
    let mut next_choice = if config.force_first_tool {
        ToolChoice::Required
    } else {
        ToolChoice::Auto
    };
    let mut tool_calls = Vec::new();
    let mut decisions = Vec::new();
    let mut turns = 0;
    let mut rounds = 0;
    let mut extra = 0;
    let mut last_text = String::new();
    let mut previous: Option<Prediction> = None;
    let mut committed: Option<Prediction> = None;
    let mut error = None;

    while turns < config.max_turns + extra {
        let req = ChatRequest {
            messages: messages.clone(),
            tools: tools.clone(),
            tool_choice: next_choice,
            temperature: config.temperature,
            seed: config.seed,
        };
        let reply = match backend.chat(&req) {
            Ok(r) => r,
            Err(BackendError::RequiredToolCallMissing) if previous.is_some() => {
                log::warn!("no tool call after continuation prompt; committing previous answer");
                committed = previous.clone();
                break;
            }
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        turns += 1;
        next_choice = ToolChoice::Auto;
        if !reply.content.trim().is_empty() {
            last_text = reply.content.clone();
        }
        if reply.has_tool_calls() {
            let calls = reply.calls().to_vec();
            messages.push(reply);
            for call in calls {
                let result = spec.toolbox.dispatch(&call, &spec.chunks);
                messages.push(ChatMessage::tool(call.id.clone(), result.message_content()));
                tool_calls.push(ToolExchange { call, result });
            }
            rounds += 1;
            if spec.single_round && rounds >= 1 {
                next_choice = ToolChoice::None;
            }
            continue;
        }
        let raw = reply.content.clone();
        messages.push(reply);
        let candidate = extract_prediction(&raw);
        let outcome = policy(&AttemptState {
            question: spec.question,
            chunks: &spec.chunks,
            messages: &messages,
            tool_calls: &tool_calls,
            turns_used: turns,
            max_turns: config.max_turns + extra,
            extra_turns_used: extra,
            candidate: &candidate,
            raw: &raw,
            previous: previous.as_ref(),
        });
        decisions.extend(outcome.record);
        match outcome.continuation {
            Some(prompt) => {
                messages.push(ChatMessage::user(prompt));
                extra += 1;
                next_choice = ToolChoice::Required;
                previous = Some(candidate);
            }
            None => {
                committed = Some(candidate);
                break;
            }
        }
    }

    let raw_final = last_text;
    let prediction = match (&error, committed) {
        (Some(_), _) => Prediction::default(),
        (None, Some(p)) => p,
        (None, None) => extract_prediction(&raw_final),
    };
    LoopOutput {
        messages,
        tool_calls,
        turns_used: turns,
        prediction,
        raw_final,
        error,
        extra_turns_used: extra,
        decisions,
    }
}

/// A policy that commits at the first termination attempt.
pub fn always_commit(_: &AttemptState<'_>) -> AttemptOutcome {
    AttemptOutcome::default()
}

/// Agent loop inputs for an agent condition on `sample`. OracleEvid reads
/// the chunks of `base` instead of the sample's own.
pub fn agent_spec<'a>(
    cond: Condition,
    sample: &'a Sample,
    base: Option<&'a Sample>,
    task: Task,
) -> Result<AgentSpec<'a>, HarnessError> {
    let context = if cond == Condition::OracleEvid {
        base.ok_or_else(|| HarnessError::MissingBase(sample.question_id.clone()))?
    } else {
        sample
    };
    Ok(AgentSpec {
        question: &sample.question,
        chunks: context.chunks.iter().map(|c| c.text.as_str()).collect(),
        system: prompts::agent_system(task),
        toolbox: Toolbox::new(toolset_for(task), cond.tool_mode(sample)),
        single_round: cond == Condition::Max1,
    })
}

fn single_shot(
    cond: Condition,
    sample: &Sample,
    task: Task,
    backend: &dyn Backend,
    config: &RunConfig,
) -> Trajectory {
    let chunks: Vec<&str> = sample.chunks.iter().map(|c| c.text.as_str()).collect();
    let (system, tools, choice) = match cond {
        Condition::Cot => (prompts::cot_system(task), Vec::new(), ToolChoice::Auto),
        _ => (
            prompts::agent_system(task),
            Toolbox::new(toolset_for(task), ToolMode::Real).schemas(),
            ToolChoice::None,
        ),
    };
    let mut messages = vec![
        ChatMessage::system(system),
        ChatMessage::user(prompts::user_message(&sample.question, &chunks)),
    ];
    let req = ChatRequest {
        messages: messages.clone(),
        tools,
        tool_choice: choice,
        temperature: config.temperature,
        seed: config.seed,
    };
    let (prediction, raw_final, error, turns) = match backend.chat(&req) {
        Ok(reply) => {
            let raw = reply.content.clone();
            messages.push(reply);
            (extract_prediction(&raw), raw, None, 1)
        }
        Err(e) => (Prediction::default(), String::new(), Some(e.to_string()), 0),
    };
    Trajectory {
        condition: cond,
        arm: None,
        question_id: sample.question_id.clone(),
        variant: sample.variant,
        messages,
        tool_calls: Vec::new(),
        turns_used: turns,
        prediction,
        raw_final,
        error,
        extra_turns_used: 0,
        gate_decisions: Vec::new(),
    }
}

/// Wraps a finished agent loop as a trajectory.
pub fn trajectory_from_loop(cond: Condition, sample: &Sample, out: LoopOutput) -> Trajectory {
    Trajectory {
        condition: cond,
        arm: None,
        question_id: sample.question_id.clone(),
        variant: sample.variant,
        messages: out.messages,
        tool_calls: out.tool_calls,
        turns_used: out.turns_used,
        prediction: out.prediction,
        raw_final: out.raw_final,
        error: out.error,
        extra_turns_used: out.extra_turns_used,
        gate_decisions: out.decisions,
    }
}

/// Runs one condition on one sample. Backend failures are recorded in the
/// trajectory; the only error is a missing Base sibling for OracleEvid.
pub fn run_condition(
    cond: Condition,
    sample: &Sample,
    base: Option<&Sample>,
    task: Task,
    backend: &dyn Backend,
    config: &RunConfig,
) -> Result<Trajectory, HarnessError> {
    if !cond.uses_tools() {
        return Ok(single_shot(cond, sample, task, backend, config));
    }
    let spec = agent_spec(cond, sample, base, task)?;
    let out = agent_loop(&spec, backend, config, &mut always_commit);
    Ok(trajectory_from_loop(cond, sample, out))
}
