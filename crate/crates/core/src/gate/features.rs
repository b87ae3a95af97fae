//! The 120-dimensional gate state: 24 numeric slots followed by hashed
//! reasoning text (64 bins) and hashed last tool output (32 bins).
//!
//! Extraction reads only what the agent could see at the termination
//! attempt. Gold fields are not reachable from [`AttemptState`].

use std::collections::HashMap;

use md5::{Digest, Md5};

use crate::distractor::lexicon::{contains_phrase, HU_REQUIRED};
use crate::harness::{AttemptState, Matcher, Prediction, ToolExchange};
use crate::text::{digit_numerals, parse_number, tokens};
use crate::toolbox::calc_expression;

pub const NUMERIC_DIM: usize = 24;
pub const REASONING_BINS: usize = 64;
pub const TOOL_BINS: usize = 32;
pub const FEATURE_DIM: usize = NUMERIC_DIM + REASONING_BINS + TOOL_BINS;

/// Names of the numeric slots, in order.
pub const NUMERIC_NAMES: [&str; NUMERIC_DIM] = [
    "turns_used",
    "budget_remaining",
    "tool_calls",
    "successful_calls",
    "failed_calls",
    "distinct_expressions",
    "duplicate_expression",
    "last_output_numeric",
    "log_last_output",
    "answer_present",
    "answer_numeric",
    "answer_equals_last_output",
    "answer_in_reasoning",
    "log_reasoning_length",
    "reasoning_numerals",
    "reasoning_hedges",
    "evidence_count",
    "evidence_in_range",
    "evidence_numeral_overlap",
    "parse_ok",
    "answer_changed",
    "message_count",
    "question_numerals",
    "chunk_count",
];

/// Bin of one token: low 64 bits of its MD5 digest, big-endian, modulo
/// `bins`.
pub fn token_bin(token: &str, bins: usize) -> usize {
    let digest = Md5::digest(token.as_bytes());
    let mut low = [0u8; 8];
    low.copy_from_slice(&digest[8..16]);
    (u64::from_be_bytes(low) % bins as u64) as usize
}

/// Hashing-trick bag of words, L2-normalized; empty text gives zeros.
pub fn hash_text(text: &str, bins: usize) -> Vec<f64> {
    assert!(bins >= 1, "bins must be positive");
    let mut v = vec![0.0; bins];
    for t in tokens(text) {
        v[token_bin(&t, bins)] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Reasoning text of a candidate: the parsed reasoning field, or the raw
/// reply when there is none.
pub fn reasoning_text<'a>(candidate: &'a Prediction, raw: &'a str) -> &'a str {
    if candidate.reasoning.trim().is_empty() {
        raw
    } else {
        &candidate.reasoning
    }
}

/// Expressions sent to the calculator, in order.
pub fn expressions(calls: &[ToolExchange]) -> Vec<String> {
    calls
        .iter()
        .filter_map(|x| calc_expression(&x.call))
        .map(|e| e.split_whitespace().collect::<String>())
        .collect()
}

fn numerals_of(text: &str) -> Vec<f64> {
    digit_numerals(text).iter().filter_map(|n| parse_number(n)).collect()
}

pub fn extract_features(state: &AttemptState<'_>) -> Vec<f64> {
    let calls = state.tool_calls;
    let ok = calls.iter().filter(|x| x.result.is_success()).count();
    let failed = calls.iter().filter(|x| !x.result.ok).count();
    let exprs = expressions(calls);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for e in &exprs {
        *counts.entry(e.as_str()).or_default() += 1;
    }
    let last_output = calls.last().map(|x| x.result.output.as_str()).unwrap_or("");
    let last_value = calls.last().and_then(|x| parse_number(&x.result.output));
    let answer = state.candidate.final_answer.trim();
    let reasoning = reasoning_text(state.candidate, state.raw);
    let reasoning_nums = numerals_of(reasoning);
    let reasoning_tokens = tokens(reasoning);
    let hedges = HU_REQUIRED
        .iter()
        .filter(|m| contains_phrase(&reasoning_tokens, m))
        .count();
    let ids = &state.candidate.evidence_ids;
    let in_range: Vec<usize> = ids.iter().copied().filter(|&i| i < state.chunks.len()).collect();
    let frac = |n: usize| if ids.is_empty() { 0.0 } else { n as f64 / ids.len() as f64 };
    let sharing = in_range
        .iter()
        .filter(|&&i| {
            numerals_of(state.chunks[i])
                .iter()
                .any(|v| reasoning_nums.iter().any(|r| (r - v).abs() < 1e-9))
        })
        .count();
    let changed = state
        .previous
        .is_some_and(|p| p.final_answer.trim() != answer);
    let b = |x: bool| if x { 1.0 } else { 0.0 };

    let mut f = Vec::with_capacity(FEATURE_DIM);
    f.push(state.turns_used as f64);
    f.push(if state.max_turns == 0 {
        0.0
    } else {
        state.max_turns.saturating_sub(state.turns_used) as f64 / state.max_turns as f64
    });
    f.push(calls.len() as f64);
    f.push(ok as f64);
    f.push(failed as f64);
    f.push(counts.len() as f64);
    f.push(b(counts.values().any(|&c| c > 1)));
    f.push(b(last_value.is_some()));
    f.push(last_value.map_or(0.0, |v| v.abs().ln_1p()));
    f.push(b(!answer.is_empty()));
    f.push(b(parse_number(answer).is_some()));
    f.push(b(!answer.is_empty() && !last_output.is_empty() && Matcher::Exact.is_correct(answer, last_output)));
    f.push(b(!answer.is_empty() && reasoning.contains(answer)));
    f.push((reasoning.chars().count() as f64).ln_1p());
    f.push(reasoning_nums.len() as f64);
    f.push(hedges as f64);
    f.push(ids.len() as f64);
    f.push(frac(in_range.len()));
    f.push(frac(sharing));
    f.push(b(state.candidate.parse_ok));
    f.push(b(changed));
    f.push(state.messages.len() as f64);
    f.push(digit_numerals(state.question).len() as f64);
    f.push(state.chunks.len() as f64);
    debug_assert_eq!(f.len(), NUMERIC_DIM);
    f.extend(hash_text(reasoning, REASONING_BINS));
    f.extend(hash_text(last_output, TOOL_BINS));
    f
}
