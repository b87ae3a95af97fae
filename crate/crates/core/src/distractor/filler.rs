//! Offline distractor generator. It answers generation requests with
//! template sentences built around the topic hint, so augmentation can run
//! end to end without a model endpoint.

use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use crate::backend::{Backend, BackendError, ChatMessage, ChatRequest};
use crate::corpus::Variant;
use crate::harness::prompts;

static COUNTS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"exactly (\d+) short sentences").unwrap());

const TB: &[&str] = &[
    "Interest in {t} tends to grow over time.",
    "Good planning makes {t} more enjoyable.",
    "Local shops often feature {t} in their displays.",
    "Many families share fond memories of {t}.",
    "Simple habits can make {t} easier to manage.",
    "Neighbors sometimes swap tips on {t}.",
];

const PED: &[&str] = &[
    "Alice handled her own {t} in a different town.",
    "Mr. Smith dealt with {t} on another occasion.",
    "The neighbor kept a separate record of {t}.",
    "Bruno looked after {t} elsewhere.",
    "Someone else organized {t} at an unrelated event.",
    "Priya managed {t} for a different group.",
];

const HU: &[&str] = &[
    "Some say {t} was popular at the time.",
    "It is said that {t} drew plenty of attention.",
    "Reportedly, {t} was a common topic of talk.",
    "Perhaps {t} mattered more than expected.",
    "People likely discussed {t} with friends.",
    "It was claimed that {t} had a special appeal.",
];

const SP: &[&str] = &["As recorded, {e}", "The record shows that {e}"];

fn variant_of(system: &str) -> Option<Variant> {
    [
        (Variant::Tb, prompts::DISTRACTOR_TB),
        (Variant::Sp, prompts::DISTRACTOR_SP),
        (Variant::Ped, prompts::DISTRACTOR_PED),
        (Variant::Hu, prompts::DISTRACTOR_HU),
    ]
    .into_iter()
    .find(|(_, t)| t.lines().next().is_some_and(|first| system.starts_with(first)))
    .map(|(v, _)| v)
}

/// Lower-cases the first letter unless the word looks like a name.
fn lower_first(sentence: &str, names: &[&str]) -> String {
    let first = sentence.split_whitespace().next().unwrap_or("");
    if names.iter().any(|n| first.trim_matches(|c: char| !c.is_alphanumeric()) == *n) {
        return sentence.to_string();
    }
    let mut c = sentence.chars();
    match c.next() {
        Some(f) => f.to_lowercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct FillerGenerator;

impl FillerGenerator {
    fn compose(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let system = req.system_prompt();
        let variant = variant_of(system)
            .ok_or_else(|| BackendError::InvalidRequest("not a distractor generation request".into()))?;
        let counts: Vec<usize> = COUNTS
            .captures_iter(system)
            .filter_map(|c| c[1].parse().ok())
            .collect();
        let (before_n, after_n) = match counts.as_slice() {
            [b, a, ..] => (*b, *a),
            _ => return Err(BackendError::InvalidRequest("sentence counts missing".into())),
        };
        let user = req.messages.get(1).map(|m| m.content.as_str()).unwrap_or("");
        let topic = user
            .lines()
            .find_map(|l| l.strip_prefix("Topic hint: "))
            .unwrap_or("the situation")
            .to_string();
        let evidence: Vec<&str> = user.lines().filter_map(|l| l.strip_prefix("[EVID] ")).collect();
        // Names are the capitalized words after "[Q]" and inside evidence.
        let names: Vec<&str> = evidence
            .iter()
            .flat_map(|e| e.split_whitespace().skip(1))
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|w| w.chars().next().is_some_and(char::is_uppercase))
            .collect();
        // SP restates evidence, but only sentences the validator accepts.
        let nums = super::core_nums(&evidence);
        let mut restated: Vec<String> = Vec::new();
        for (j, e) in evidence.iter().flat_map(|e| super::sentences(e)).enumerate() {
            let candidate = SP[j % SP.len()].replace("{e}", &lower_first(e, &names));
            if super::validate_sentence(&candidate, Variant::Sp, &[], &nums).is_empty() {
                restated.push(candidate);
            }
        }
        if restated.is_empty() {
            restated.push("The record is kept on file.".into());
        }
        let mut k = 0usize;
        let mut next = || {
            let i = k;
            k += 1;
            match variant {
                Variant::Sp => restated[i % restated.len()].clone(),
                Variant::Tb => TB[i % TB.len()].replace("{t}", &topic),
                Variant::Ped => PED[i % PED.len()].replace("{t}", &topic),
                _ => HU[i % HU.len()].replace("{t}", &topic),
            }
        };
        let before: Vec<String> = (0..before_n).map(|_| next()).collect();
        let after: Vec<String> = (0..after_n).map(|_| next()).collect();
        Ok(json!({"topic": topic, "before": before, "after": after}).to_string())
    }
}

impl Backend for FillerGenerator {
    fn chat(&self, req: &ChatRequest) -> Result<ChatMessage, BackendError> {
        req.validate()?;
        Ok(ChatMessage::assistant(self.compose(req)?))
    }

    fn describe(&self) -> String {
        "scripted:filler".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sample;
    use crate::distractor::{build_generation_request, check_batch, parse_batch};

    #[test]
    fn filler_batches_pass_validation() {
        let base: Sample = serde_json::from_str(r#"{"question_id":"q","variant":"Base","question":"How many clips did Natalia sell altogether in April and May?","chunks":[{"id":0,"text":"Natalia sold clips to 48 of her friends in April, and then she sold half as many clips in May.","role":"evidence"}],"gold_answer":"72","gold_evidence_ids":[0]}"#).unwrap();
        for v in Variant::NOISY {
            let r = build_generation_request(&base, v, 2, 3).unwrap();
            let reply = FillerGenerator.chat(&r.chat_request(0.0, None)).unwrap();
            let batch = parse_batch(&reply.content).unwrap();
            assert_eq!((batch.before.len(), batch.after.len()), (2, 3));
            assert!(check_batch(&batch, &r.request).is_empty(), "{v}: {:?}", check_batch(&batch, &r.request));
        }
    }
}
