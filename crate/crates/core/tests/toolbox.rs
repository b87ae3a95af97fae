use std::collections::BTreeSet;

use proptest::prelude::*;
use toolgap_core::toolbox::{compare_values, search_sentences, Comparison};

/// Brute-force ranking: score every chunk by recounting document
/// frequencies per token, then pick the best remaining chunk each round.
fn search_oracle(query: &str, chunks: &[&str], top_k: usize) -> Vec<usize> {
    let tok = |s: &str| -> BTreeSet<String> {
        s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
    };
    let q = tok(query);
    if q.is_empty() {
        return Vec::new();
    }
    let sets: Vec<BTreeSet<String>> = chunks.iter().map(|c| tok(c)).collect();
    let n = chunks.len() as f64;
    let scores: Vec<f64> = sets
        .iter()
        .map(|set| {
            q.iter()
                .filter(|t| set.contains(*t))
                .map(|t| {
                    let df = sets.iter().filter(|s| s.contains(t)).count() as f64;
                    (1.0 + n / df).ln()
                })
                .sum()
        })
        .collect();
    let mut left: Vec<usize> = (0..chunks.len()).collect();
    let mut out = Vec::new();
    while out.len() < top_k && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            if scores[left[i]] > scores[left[best]] {
                best = i;
            }
        }
        out.push(left.remove(best));
    }
    out
}

const VOCAB: [&str; 10] = ["river", "Paris", "born", "1887", "film", "the", "of", "city", "director", "band"];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(0..VOCAB.len(), 0..8).prop_map(|ix| ix.iter().map(|&i| VOCAB[i]).collect::<Vec<_>>().join(" "))
}

proptest! {
    #[test]
    fn search_matches_brute_force(query in text(), chunks in prop::collection::vec(text(), 0..8), k in 0usize..10) {
        let refs: Vec<&str> = chunks.iter().map(String::as_str).collect();
        prop_assert_eq!(search_sentences(&query, &refs, k), search_oracle(&query, &refs, k));
    }

    #[test]
    fn comparison_is_antisymmetric(a in -1000i64..1000, b in -1000i64..1000) {
        let (x, y) = (compare_values(&a.to_string(), &b.to_string()), compare_values(&b.to_string(), &a.to_string()));
        let flip = |c| match c {
            Comparison::Greater => Comparison::Less,
            Comparison::Less => Comparison::Greater,
            other => other,
        };
        prop_assert_eq!(x, flip(y));
    }
}

#[test]
fn rare_tokens_outrank_common_ones() {
    let chunks = ["the film of the city", "the band", "the river of Paris"];
    assert_eq!(search_sentences("Paris the", &chunks, 3), vec![2, 0, 1]);
}
