//! Closed-context QA tools over a sample's own chunks.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::text::{parse_number, tokens};

/// Ranks chunk indices by lexical overlap with `query`.
///
/// Each distinct query token found in a chunk contributes
/// `ln(1 + N / df)`, where `N` is the number of chunks and `df` the number
/// of chunks containing the token, so rare tokens weigh more. Ties are
/// broken by ascending id. Chunks with zero overlap are still ranked,
/// after every chunk with positive score.
pub fn search_sentences(query: &str, chunks: &[&str], top_k: usize) -> Vec<usize> {
    let query_tokens: BTreeSet<String> = tokens(query).into_iter().collect();
    if query_tokens.is_empty() || top_k == 0 {
        return Vec::new();
    }
    let chunk_tokens: Vec<BTreeSet<String>> = chunks.iter().map(|c| tokens(c).into_iter().collect()).collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for set in &chunk_tokens {
        for t in set {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }
    let n = chunks.len() as f64;
    let mut scored: Vec<(usize, f64)> = chunk_tokens
        .iter()
        .enumerate()
        .map(|(id, set)| {
            let score = query_tokens
                .iter()
                .filter(|t| set.contains(*t))
                .map(|t| (1.0 + n / df[t.as_str()] as f64).ln())
                .sum();
            (id, score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(top_k).map(|(id, _)| id).collect()
}

/// Chunk texts for `ids` in requested order, plus the ids that were out
/// of range and therefore skipped.
pub fn read_sentences<'a>(ids: &[i64], chunks: &[&'a str]) -> (Vec<(usize, &'a str)>, Vec<i64>) {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for &id in ids {
        match usize::try_from(id).ok().and_then(|i| chunks.get(i).map(|t| (i, *t))) {
            Some(hit) => found.push(hit),
            None => missing.push(id),
        }
    }
    (found, missing)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Less,
    Equal,
    Greater,
    Incomparable,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::Less => "less",
            Comparison::Equal => "equal",
            Comparison::Greater => "greater",
            Comparison::Incomparable => "incomparable",
        }
    }
}

const COMPARE_TOLERANCE: f64 = 1e-9;

pub fn compare_values(a: &str, b: &str) -> Comparison {
    if let (Some(x), Some(y)) = (parse_number(a), parse_number(b)) {
        return if (x - y).abs() <= COMPARE_TOLERANCE {
            Comparison::Equal
        } else if x < y {
            Comparison::Less
        } else {
            Comparison::Greater
        };
    }
    if a.trim().to_lowercase() == b.trim().to_lowercase() {
        Comparison::Equal
    } else {
        Comparison::Incomparable
    }
}
