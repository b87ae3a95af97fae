//! Tools available to the agent and their intervention modes.

mod calc;
mod qa;

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::backend::{ToolCall, ToolSchema};
use crate::corpus::Task;
use crate::text::format_number;

pub use calc::{eval_expression, CalcError};
pub use qa::{compare_values, read_sentences, search_sentences, Comparison};

/// Fixed output of every call under the no-op intervention.
pub const NOOP_OUTPUT: &str = "ok (no result)";

const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    ParseError,
    DivZero,
    UnknownTool,
    BadArgs,
    Stubbed,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::ParseError => "parse_error",
            ErrorKind::DivZero => "div_zero",
            ErrorKind::UnknownTool => "unknown_tool",
            ErrorKind::BadArgs => "bad_args",
            ErrorKind::Stubbed => "stubbed",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub call_id: String,
    pub ok: bool,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
    /// Human-readable failure description shown to the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Non-fatal notes, e.g. ids skipped by `read_sentences`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ToolResult {
    fn success(call_id: &str, output: String) -> Self {
        Self {
            call_id: call_id.to_string(),
            ok: true,
            output,
            error_kind: None,
            detail: None,
            warnings: Vec::new(),
        }
    }

    fn failure(call_id: &str, kind: ErrorKind, detail: impl Into<String>) -> Self {
        Self {
            call_id: call_id.to_string(),
            ok: false,
            output: String::new(),
            error_kind: Some(kind),
            detail: Some(detail.into()),
            warnings: Vec::new(),
        }
    }

    fn stub(call_id: &str) -> Self {
        Self {
            call_id: call_id.to_string(),
            ok: true,
            output: NOOP_OUTPUT.to_string(),
            error_kind: Some(ErrorKind::Stubbed),
            detail: None,
            warnings: Vec::new(),
        }
    }

    /// A call that actually produced a usable result.
    pub fn is_success(&self) -> bool {
        self.ok && self.error_kind.is_none()
    }

    /// Text placed in the tool message returned to the model.
    pub fn message_content(&self) -> String {
        if self.ok {
            let mut text = self.output.clone();
            for w in &self.warnings {
                text.push_str("\nwarning: ");
                text.push_str(w);
            }
            text
        } else {
            let kind = self.error_kind.map(ErrorKind::as_str).unwrap_or("error");
            match &self.detail {
                Some(d) => format!("error ({kind}): {d}"),
                None => format!("error ({kind})"),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ToolMode {
    Real,
    Noop,
    OracleCalc { gold_answer: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Calculate,
    SearchSentences,
    ReadSentences,
    CompareValues,
}

impl ToolKind {
    pub const ALL: [ToolKind; 4] = [
        ToolKind::Calculate,
        ToolKind::SearchSentences,
        ToolKind::ReadSentences,
        ToolKind::CompareValues,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToolKind::Calculate => "calculate",
            ToolKind::SearchSentences => "search_sentences",
            ToolKind::ReadSentences => "read_sentences",
            ToolKind::CompareValues => "compare_values",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn schema(self) -> ToolSchema {
        let (description, parameters) = match self {
            ToolKind::Calculate => (
                "Evaluate an arithmetic expression using + - * / and parentheses.",
                json!({
                    "type": "object",
                    "properties": {"expression": {"type": "string", "description": "e.g. 48/2"}},
                    "required": ["expression"],
                }),
            ),
            ToolKind::SearchSentences => (
                "Find the information chunks that best match a query. Returns chunk ids with their text.",
                json!({
                    "type": "object",
                    "properties": {
                        "query": {"type": "string"},
                        "top_k": {"type": "integer", "minimum": 1},
                    },
                    "required": ["query"],
                }),
            ),
            ToolKind::ReadSentences => (
                "Read information chunks by id.",
                json!({
                    "type": "object",
                    "properties": {"ids": {"type": "array", "items": {"type": "integer"}}},
                    "required": ["ids"],
                }),
            ),
            ToolKind::CompareValues => (
                "Compare two values numerically (or as case-insensitive strings).",
                json!({
                    "type": "object",
                    "properties": {"a": {"type": "string"}, "b": {"type": "string"}},
                    "required": ["a", "b"],
                }),
            ),
        };
        ToolSchema {
            name: self.name().to_string(),
            description: description.to_string(),
            parameters,
        }
    }
}

/// Tools offered for a task: GSM8K agents get only the calculator,
/// HotPotQA agents get all four tools.
pub fn toolset_for(task: Task) -> Vec<ToolKind> {
    match task {
        Task::Gsm8k => vec![ToolKind::Calculate],
        Task::HotpotQa => ToolKind::ALL.to_vec(),
    }
}

pub fn schemas(tools: &[ToolKind]) -> Vec<ToolSchema> {
    tools.iter().map(|t| t.schema()).collect()
}

/// Expression argument of a `calculate` call, if well-formed.
pub fn calc_expression(call: &ToolCall) -> Option<String> {
    if call.name != ToolKind::Calculate.name() {
        return None;
    }
    let args: Value = serde_json::from_str(&call.arguments).ok()?;
    args.get("expression")?.as_str().map(str::to_string)
}

fn parse_args(call: &ToolCall) -> Result<Map<String, Value>, ToolResult> {
    match serde_json::from_str::<Value>(&call.arguments) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ToolResult::failure(&call.id, ErrorKind::BadArgs, "arguments must be a JSON object")),
        Err(e) => Err(ToolResult::failure(&call.id, ErrorKind::BadArgs, format!("arguments are not JSON: {e}"))),
    }
}

fn string_arg(args: &Map<String, Value>, key: &str, call_id: &str) -> Result<String, ToolResult> {
    match args.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(ToolResult::failure(call_id, ErrorKind::BadArgs, format!("'{key}' must be a string"))),
        None => Err(ToolResult::failure(call_id, ErrorKind::BadArgs, format!("missing '{key}'"))),
    }
}

fn run(call: &ToolCall, kind: ToolKind, chunks: &[&str], mode: &ToolMode) -> Result<ToolResult, ToolResult> {
    let id = call.id.as_str();
    let args = parse_args(call)?;
    match kind {
        ToolKind::Calculate => {
            let expr = match args.get("expression") {
                Some(Value::String(s)) => s.clone(),
                _ => return Err(ToolResult::failure(id, ErrorKind::BadArgs, "'expression' must be a string")),
            };
            if let ToolMode::OracleCalc { gold_answer } = mode {
                return Ok(ToolResult::success(id, gold_answer.clone()));
            }
            match eval_expression(&expr) {
                Ok(v) => Ok(ToolResult::success(id, format_number(v))),
                Err(CalcError::DivZero) => Err(ToolResult::failure(id, ErrorKind::DivZero, "division by zero")),
                Err(CalcError::Parse(msg)) => Err(ToolResult::failure(id, ErrorKind::ParseError, msg)),
            }
        }
        ToolKind::SearchSentences => {
            let query = string_arg(&args, "query", id)?;
            let top_k = match args.get("top_k") {
                None | Some(Value::Null) => DEFAULT_TOP_K,
                Some(v) => match v.as_u64() {
                    Some(k) if k >= 1 => k as usize,
                    _ => return Err(ToolResult::failure(id, ErrorKind::BadArgs, "'top_k' must be a positive integer")),
                },
            };
            let hits = search_sentences(&query, chunks, top_k);
            let lines: Vec<String> = hits.iter().map(|&i| format!("[{i}] {}", chunks[i])).collect();
            Ok(ToolResult::success(id, lines.join("\n")))
        }
        ToolKind::ReadSentences => {
            let ids: Vec<i64> = match args.get("ids") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(Value::as_i64)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| ToolResult::failure(id, ErrorKind::BadArgs, "'ids' must contain integers"))?,
                _ => return Err(ToolResult::failure(id, ErrorKind::BadArgs, "'ids' must be an array of integers")),
            };
            let (found, missing) = read_sentences(&ids, chunks);
            let lines: Vec<String> = found.iter().map(|(i, t)| format!("[{i}] {t}")).collect();
            let mut result = ToolResult::success(id, lines.join("\n"));
            if !missing.is_empty() {
                result.warnings.push(format!("skipped out-of-range ids {missing:?}"));
            }
            Ok(result)
        }
        ToolKind::CompareValues => {
            let a = string_arg(&args, "a", id)?;
            let b = string_arg(&args, "b", id)?;
            Ok(ToolResult::success(id, compare_values(&a, &b).as_str().to_string()))
        }
    }
}

/// Executes one tool call against the sample's chunk texts. Any of the
/// four tools may be called; use [`Toolbox`] to restrict the set.
pub fn dispatch_tool(call: &ToolCall, chunks: &[&str], mode: &ToolMode) -> ToolResult {
    Toolbox::new(ToolKind::ALL.to_vec(), mode.clone()).dispatch(call, chunks)
}

/// A declared toolset plus the intervention mode it runs under.
#[derive(Debug, Clone)]
pub struct Toolbox {
    tools: Vec<ToolKind>,
    mode: ToolMode,
}

impl Toolbox {
    pub fn new(tools: Vec<ToolKind>, mode: ToolMode) -> Self {
        Self { tools, mode }
    }

    pub fn tools(&self) -> &[ToolKind] {
        &self.tools
    }

    pub fn mode(&self) -> &ToolMode {
        &self.mode
    }

    pub fn schemas(&self) -> Vec<ToolSchema> {
        schemas(&self.tools)
    }

    pub fn dispatch(&self, call: &ToolCall, chunks: &[&str]) -> ToolResult {
        if self.mode == ToolMode::Noop {
            return ToolResult::stub(&call.id);
        }
        let Some(kind) = ToolKind::from_name(&call.name).filter(|k| self.tools.contains(k)) else {
            return ToolResult::failure(&call.id, ErrorKind::UnknownTool, format!("no tool named '{}'", call.name));
        };
        run(call, kind, chunks, &self.mode).unwrap_or_else(|e| e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calc(expr: &str) -> ToolCall {
        ToolCall::new("c1", "calculate", json!({ "expression": expr }).to_string())
    }

    #[test]
    fn real_calculator() {
        let r = dispatch_tool(&calc("48/2"), &[], &ToolMode::Real);
        assert!(r.is_success());
        assert_eq!(r.output, "24");
        let r = dispatch_tool(&calc("1/0"), &[], &ToolMode::Real);
        assert!(!r.ok);
        assert_eq!(r.output, "");
        assert_eq!(r.error_kind, Some(ErrorKind::DivZero));
        assert_eq!(r.message_content(), "error (div_zero): division by zero");
        let r = dispatch_tool(&calc("0.2*50"), &[], &ToolMode::Real);
        assert_eq!(r.output, "10");
        let r = dispatch_tool(&calc("1/3"), &[], &ToolMode::Real);
        assert_eq!(r.output, "0.3333333333333333");
    }

    #[test]
    fn noop_and_oracle_modes() {
        let r = dispatch_tool(&calc("48/2"), &[], &ToolMode::Noop);
        assert!(r.ok);
        assert_eq!(r.output, NOOP_OUTPUT);
        assert_eq!(r.error_kind, Some(ErrorKind::Stubbed));
        assert!(!r.is_success());
        let oracle = ToolMode::OracleCalc {
            gold_answer: "72".into(),
        };
        assert_eq!(dispatch_tool(&calc("anything"), &[], &oracle).output, "72");
        let bad = ToolCall::new("c2", "calculate", "{}");
        assert_eq!(dispatch_tool(&bad, &[], &oracle).error_kind, Some(ErrorKind::BadArgs));
        let search = ToolCall::new("c3", "search_sentences", r#"{"query":"a"}"#);
        assert_eq!(dispatch_tool(&search, &["a b", "c"], &oracle).output, "[0] a b\n[1] c");
    }

    #[test]
    fn schema_failures() {
        let r = dispatch_tool(&ToolCall::new("x", "calculate", "not json"), &[], &ToolMode::Real);
        assert_eq!(r.error_kind, Some(ErrorKind::BadArgs));
        let r = dispatch_tool(&ToolCall::new("x", "calculate", r#"{"expression": 5}"#), &[], &ToolMode::Real);
        assert_eq!(r.error_kind, Some(ErrorKind::BadArgs));
        let r = dispatch_tool(&ToolCall::new("x", "web_search", "{}"), &[], &ToolMode::Real);
        assert_eq!(r.error_kind, Some(ErrorKind::UnknownTool));
        let gsm = Toolbox::new(toolset_for(Task::Gsm8k), ToolMode::Real);
        let r = gsm.dispatch(&ToolCall::new("x", "read_sentences", r#"{"ids":[0]}"#), &["a"]);
        assert_eq!(r.error_kind, Some(ErrorKind::UnknownTool));
        let r = dispatch_tool(&ToolCall::new("x", "search_sentences", r#"{"query":"a","top_k":0}"#), &["a"], &ToolMode::Real);
        assert_eq!(r.error_kind, Some(ErrorKind::BadArgs));
    }

    #[test]
    fn read_and_compare_outputs() {
        let chunks = ["zero", "one"];
        let r = dispatch_tool(&ToolCall::new("x", "read_sentences", r#"{"ids":[1,7]}"#), &chunks, &ToolMode::Real);
        assert!(r.is_success());
        assert_eq!(r.output, "[1] one");
        assert_eq!(r.warnings.len(), 1);
        assert!(r.message_content().contains("warning: skipped out-of-range ids [7]"));
        let r = dispatch_tool(&ToolCall::new("x", "compare_values", r#"{"a":"24","b":72}"#), &[], &ToolMode::Real);
        assert_eq!(r.output, "less");
    }

    #[test]
    fn toolsets_and_schemas() {
        assert_eq!(toolset_for(Task::Gsm8k), vec![ToolKind::Calculate]);
        let names: Vec<String> = schemas(&toolset_for(Task::HotpotQa)).into_iter().map(|s| s.name).collect();
        assert_eq!(names, ["calculate", "search_sentences", "read_sentences", "compare_values"]);
        assert_eq!(calc_expression(&calc("2+2")).as_deref(), Some("2+2"));
    }
}
