//! Parsing final answers out of model text, and answer matching.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::text::{normalize_answer, numeric_eq};

static ANGLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<\s*([^<>\s][^<>]*?)\s*>").unwrap());
static LAST_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d[\d,]*(?:\.\d+)?").unwrap());

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub final_answer: String,
    pub evidence_ids: BTreeSet<usize>,
    /// The `calc_chain` or `reasoning` field, or the raw text on fallback.
    pub reasoning: String,
    pub parse_ok: bool,
}

fn answer_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_string(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn evidence_ids(v: Option<&Value>) -> BTreeSet<usize> {
    let Some(Value::Array(items)) = v else {
        return BTreeSet::new();
    };
    items
        .iter()
        .filter_map(|item| match item {
            Value::Number(n) => n.as_u64().map(|x| x as usize),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        })
        .collect()
}

/// First JSON object in `raw` that carries a `final_answer` key.
fn first_answer_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            if map.contains_key("final_answer") {
                return Some(map);
            }
        }
    }
    None
}

/// Parses a model's final text.
///
/// Tier 1 is the first well-formed JSON object with a `final_answer` key.
/// Otherwise the last `<value>` capture is used, then the last number in
/// the text; both fallbacks set `parse_ok = false`.
pub fn extract_prediction(raw: &str) -> Prediction {
    if let Some(obj) = first_answer_object(raw) {
        let reasoning = ["calc_chain", "reasoning"]
            .iter()
            .find_map(|k| obj.get(*k).and_then(Value::as_str))
            .unwrap_or_default()
            .to_string();
        return Prediction {
            final_answer: answer_text(&obj["final_answer"]),
            evidence_ids: evidence_ids(obj.get("evidence_ids")),
            reasoning,
            parse_ok: true,
        };
    }
    let fallback = ANGLE
        .captures_iter(raw)
        .last()
        .map(|c| c[1].trim().to_string())
        .or_else(|| LAST_NUMBER.find_iter(raw).last().map(|m| m.as_str().replace(',', "")));
    Prediction {
        final_answer: fallback.unwrap_or_default(),
        evidence_ids: BTreeSet::new(),
        reasoning: raw.trim().to_string(),
        parse_ok: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    #[default]
    Exact,
    Contains,
}

/// Absolute tolerance of numeric answer equality.
pub const NUMERIC_TOLERANCE: f64 = 1e-6;

impl Matcher {
    pub fn is_correct(self, prediction: &str, gold: &str) -> bool {
        match self {
            Matcher::Exact => match numeric_eq(prediction, gold, NUMERIC_TOLERANCE) {
                Some(eq) => eq,
                None => {
                    let p = normalize_answer(prediction);
                    !p.is_empty() && p == normalize_answer(gold)
                }
            },
            Matcher::Contains => {
                if numeric_eq(prediction, gold, NUMERIC_TOLERANCE) == Some(true) {
                    return true;
                }
                let g = normalize_answer(gold);
                !g.is_empty() && normalize_answer(prediction).contains(&g)
            }
        }
    }
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Matcher::Exact => "exact",
            Matcher::Contains => "contains",
        })
    }
}

impl FromStr for Matcher {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Matcher::Exact),
            "contains" => Ok(Matcher::Contains),
            other => Err(format!("unknown matcher '{other}'")),
        }
    }
}
