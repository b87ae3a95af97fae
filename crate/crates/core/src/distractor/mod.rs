//! Type-guided distractor augmentation: generation requests built from the
//! bundled prompts, rule validation of candidate sentences, and assembly
//! of labeled noisy variants.

pub mod filler;
pub mod lexicon;

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, ChatMessage, ChatRequest, ToolChoice};
use crate::corpus::{Chunk, ChunkRole, Corpus, Sample, Variant};
use crate::harness::prompts;
use crate::text::{digit_numerals, number_word_value, parse_number, tokens};
use lexicon::*;

pub use filler::FillerGenerator;

#[derive(Debug, Error, PartialEq)]
pub enum DistractorError {
    #[error("variant {0} has no generation template")]
    UnknownVariant(Variant),
    #[error("request must ask for at least one sentence")]
    EmptyRequest,
    #[error("sample {0} is not a Base sample")]
    NotBase(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub variant: Variant,
    pub topic_hint: String,
    pub core_words: Vec<String>,
    pub core_nums: Vec<String>,
    pub before_n: usize,
    pub after_n: usize,
    pub template_id: String,
}

/// A request together with the chat messages sent to the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedRequest {
    pub request: GenerationRequest,
    /// The filled template.
    pub prompt: String,
    /// The evidence-centric problem view.
    pub problem: String,
}

impl RenderedRequest {
    pub fn chat_request(&self, temperature: f64, seed: Option<u64>) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::system(self.prompt.clone()), ChatMessage::user(self.problem.clone())],
            tools: Vec::new(),
            tool_choice: ToolChoice::None,
            temperature,
            seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorBatch {
    #[serde(default)]
    pub topic: String,
    pub before: Vec<String>,
    pub after: Vec<String>,
}

fn template(variant: Variant) -> Result<(&'static str, &'static str), DistractorError> {
    match variant {
        Variant::Tb => Ok(("distractor_tb", prompts::DISTRACTOR_TB)),
        Variant::Sp => Ok(("distractor_sp", prompts::DISTRACTOR_SP)),
        Variant::Ped => Ok(("distractor_ped", prompts::DISTRACTOR_PED)),
        Variant::Hu => Ok(("distractor_hu", prompts::DISTRACTOR_HU)),
        Variant::Base => Err(DistractorError::UnknownVariant(variant)),
    }
}

/// Splits text into sentences at `.`, `!` or `?` followed by whitespace.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace()) {
            let s = text[start..=i].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Words keeping their case, split like [`tokens`].
fn cased_words(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect()
}

/// Proper-noun heuristic: capitalized words that are not sentence
/// openers or number words, in order of first appearance.
pub fn core_words<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for text in texts {
        for sentence in sentences(text.as_ref()) {
            for (i, w) in cased_words(sentence).into_iter().enumerate() {
                if !w.chars().next().is_some_and(char::is_uppercase) {
                    continue;
                }
                let lower = w.to_lowercase();
                if (i == 0 && OPENERS.contains(&lower.as_str())) || number_word_value(&lower).is_some() || w == "I" {
                    continue;
                }
                if !out.iter().any(|x| x == w) {
                    out.push(w.to_string());
                }
            }
        }
    }
    out
}

/// Every digit numeral in the texts, deduplicated in order.
pub fn core_nums<S: AsRef<str>>(texts: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in texts {
        for n in digit_numerals(t.as_ref()) {
            if !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

/// Most frequent content word of the evidence and question (ties: first
/// seen), used to steer the topic.
pub fn topic_hint<S: AsRef<str>>(texts: &[S], exclude: &[String]) -> String {
    let excluded: Vec<String> = exclude.iter().map(|w| w.to_lowercase()).collect();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for t in texts {
        for tok in tokens(t.as_ref()) {
            if tok.len() < 4
                || tok.chars().any(|c| c.is_ascii_digit())
                || STOPWORDS.contains(&tok.as_str())
                || number_word_value(&tok).is_some()
                || excluded.contains(&tok)
                || is_lexicon_word(&tok)
            {
                continue;
            }
            match counts.iter_mut().find(|(w, _)| *w == tok) {
                Some((_, c)) => *c += 1,
                None => counts.push((tok, 1)),
            }
        }
    }
    let mut best: Option<&(String, usize)> = None;
    for entry in &counts {
        if best.is_none_or(|b| entry.1 > b.1) {
            best = Some(entry);
        }
    }
    best.map(|(w, _)| w.clone()).unwrap_or_else(|| "the situation".into())
}

fn is_lexicon_word(tok: &str) -> bool {
    [DIFFERENCE_FORBIDDEN, HU_REQUIRED, TB_MATH, SP_SOLVING, SP_APPROXIMATION]
        .iter()
        .any(|list| list.contains(&tok))
}

/// Builds the generation request for one Base sample and variant.
pub fn build_generation_request(
    s: &Sample,
    variant: Variant,
    before_n: usize,
    after_n: usize,
) -> Result<RenderedRequest, DistractorError> {
    if s.variant != Variant::Base {
        return Err(DistractorError::NotBase(s.question_id.clone()));
    }
    let (template_id, text) = template(variant)?;
    if before_n + after_n == 0 {
        return Err(DistractorError::EmptyRequest);
    }
    let evidence: Vec<&str> = s.evidence_chunks().map(|c| c.text.as_str()).collect();
    let mut entity_sources = evidence.clone();
    entity_sources.push(&s.question);
    let words = core_words(&entity_sources);
    let nums = core_nums(&evidence);
    let topic = topic_hint(&entity_sources, &words);
    let before = before_n.to_string();
    let after = after_n.to_string();
    let cw = words.join(", ");
    let cn = nums.join(", ");
    let prompt = prompts::fill(
        text.trim_end(),
        &[("BEFORE_N", &before), ("AFTER_N", &after), ("CORE_WORDS", &cw), ("CORE_NUMS", &cn)],
    );
    let mut problem = String::from("Problem core (evidence-centric view):\n");
    for e in &evidence {
        problem.push_str(&format!("[EVID] {e}\n"));
    }
    problem.push_str(&format!("[Q] {}\nTopic hint: {topic}", s.question));
    Ok(RenderedRequest {
        request: GenerationRequest {
            variant,
            topic_hint: topic,
            core_words: words,
            core_nums: nums,
            before_n,
            after_n,
            template_id: template_id.to_string(),
        },
        prompt,
        problem,
    })
}

/// Rule violations of a single sentence. Messages are prefixed with the
/// variant tag.
pub fn validate_sentence(sentence: &str, variant: Variant, core_words: &[String], core_nums: &[String]) -> Vec<String> {
    let tag = variant.as_str();
    let mut v = Vec::new();
    if sentence.trim().is_empty() {
        v.push(format!("{tag}: empty sentence"));
        return v;
    }
    let toks = tokens(sentence);
    let digits = digit_numerals(sentence);
    let words: Vec<&String> = toks.iter().filter(|t| number_word_value(t).is_some()).collect();
    let core_values: Vec<f64> = core_nums.iter().filter_map(|n| parse_number(n)).collect();
    let is_core = |x: f64| core_values.iter().any(|c| (c - x).abs() < 1e-9);
    let copies_core = digits.iter().filter_map(|d| parse_number(d)).any(is_core)
        || words.iter().filter_map(|w| number_word_value(w)).any(|x| is_core(x as f64));

    let no_numbers = |v: &mut Vec<String>| {
        if !digits.is_empty() {
            v.push(format!("{tag}: contains digit"));
        }
        if !words.is_empty() {
            v.push(format!("{tag}: contains number word"));
        }
        if copies_core {
            v.push(format!("{tag}: copies core number"));
        }
    };
    let forbid = |v: &mut Vec<String>, list: &[&str], what: &str| {
        for w in find_all(&toks, list) {
            v.push(format!("{tag}: {what} '{w}'"));
        }
    };

    match variant {
        Variant::Tb => {
            no_numbers(&mut v);
            forbid(&mut v, TB_MATH, "math strategy word");
            forbid(&mut v, DIFFERENCE_FORBIDDEN, "difference marker");
            forbid(&mut v, TB_HEDGING, "hedging marker");
            let cased = cased_words(sentence);
            for w in core_words {
                let parts = cased_words(w);
                if !parts.is_empty() && cased.windows(parts.len()).any(|win| win == parts.as_slice()) {
                    v.push(format!("{tag}: mentions core entity '{w}'"));
                }
            }
        }
        Variant::Ped => {
            if find_all(&toks, PED_REQUIRED).is_empty() {
                v.push(format!("{tag}: missing difference marker"));
            }
            forbid(&mut v, PED_HEDGING, "hedging marker");
            no_numbers(&mut v);
        }
        Variant::Hu => {
            if find_all(&toks, HU_REQUIRED).is_empty() {
                v.push(format!("{tag}: missing hedging marker"));
            }
            forbid(&mut v, DIFFERENCE_FORBIDDEN, "difference marker");
            no_numbers(&mut v);
            for p in find_all(&toks, HU_ANSWER) {
                v.push(format!("{tag}: asserts answer '{p}'"));
            }
            if let Some(pos) = toks.iter().position(|t| t == "option") {
                if toks.get(pos + 1).is_some_and(|t| t.chars().count() == 1) {
                    v.push(format!("{tag}: asserts answer 'option X'"));
                }
            }
        }
        Variant::Sp => {
            for d in &digits {
                if !parse_number(d).is_some_and(is_core) {
                    v.push(format!("{tag}: new number '{d}'"));
                }
            }
            for w in &words {
                if !number_word_value(w).is_some_and(|x| is_core(x as f64)) {
                    v.push(format!("{tag}: new number '{w}'"));
                }
            }
            forbid(&mut v, DIFFERENCE_FORBIDDEN, "difference marker");
            forbid(&mut v, SP_HEDGING, "hedging marker");
            let approx: Vec<&str> = SP_APPROXIMATION.iter().copied().filter(|w| !SP_HEDGING.contains(w)).collect();
            forbid(&mut v, &approx, "approximation word");
            forbid(&mut v, SP_SOLVING, "solving hint");
        }
        Variant::Base => v.push("Base: not a distractor variant".into()),
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `before[i]`, `after[i]` or `batch`.
    pub slot: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.slot, self.message)
    }
}

/// Validates every sentence of a batch. Pure.
pub fn validate_distractors(
    batch: &DistractorBatch,
    variant: Variant,
    core_words: &[String],
    core_nums: &[String],
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (side, list) in [("before", &batch.before), ("after", &batch.after)] {
        for (i, s) in list.iter().enumerate() {
            for message in validate_sentence(s, variant, core_words, core_nums) {
                out.push(Violation {
                    slot: format!("{side}[{i}]"),
                    message,
                });
            }
        }
    }
    out
}

/// Validates a batch against a request, including sentence counts.
pub fn check_batch(batch: &DistractorBatch, req: &GenerationRequest) -> Vec<Violation> {
    let mut out = Vec::new();
    if batch.before.len() != req.before_n || batch.after.len() != req.after_n {
        out.push(Violation {
            slot: "batch".into(),
            message: format!(
                "expected {}/{} sentences, got {}/{}",
                req.before_n,
                req.after_n,
                batch.before.len(),
                batch.after.len()
            ),
        });
    }
    out.extend(validate_distractors(batch, req.variant, &req.core_words, &req.core_nums));
    out
}

/// Parses a generator reply. Surrounding prose or a code fence around the
/// JSON object is tolerated.
pub fn parse_batch(reply: &str) -> Result<DistractorBatch, String> {
    let start = reply.find('{').ok_or("reply contains no JSON object")?;
    let end = reply.rfind('}').ok_or("reply contains no JSON object")?;
    if end < start {
        return Err("reply contains no JSON object".into());
    }
    serde_json::from_str(&reply[start..=end]).map_err(|e| format!("malformed batch JSON: {e}"))
}

/// Inserts the batch around the base chunks as noise and renumbers.
pub fn assemble_variant(base: &Sample, batch: &DistractorBatch, variant: Variant) -> Sample {
    let shift = batch.before.len();
    let mut chunks = Vec::with_capacity(shift + base.chunks.len() + batch.after.len());
    for t in &batch.before {
        chunks.push((t.clone(), ChunkRole::Noise));
    }
    for c in &base.chunks {
        chunks.push((c.text.clone(), c.role));
    }
    for t in &batch.after {
        chunks.push((t.clone(), ChunkRole::Noise));
    }
    Sample {
        question_id: base.question_id.clone(),
        variant,
        question: base.question.clone(),
        chunks: chunks
            .into_iter()
            .enumerate()
            .map(|(id, (text, role))| Chunk { id, text, role })
            .collect(),
        gold_answer: base.gold_answer.clone(),
        gold_evidence_ids: base.gold_evidence_ids.iter().map(|i| i + shift).collect(),
        gold_step_count: base.gold_step_count,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub variants: Vec<Variant>,
    pub before_n: usize,
    pub after_n: usize,
    /// Extra attempts after the first.
    pub max_retries: usize,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub jobs: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            variants: Variant::NOISY.to_vec(),
            before_n: 2,
            after_n: 2,
            max_retries: 2,
            temperature: 0.7,
            seed: Some(0),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub question_id: String,
    pub variant: Variant,
    pub attempts: usize,
    pub last_error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutput {
    pub corpus: Corpus,
    pub skipped: Vec<SkipRecord>,
}

fn generate_one(
    base: &Sample,
    variant: Variant,
    generator: &dyn Backend,
    cfg: &AugmentConfig,
) -> Result<Sample, SkipRecord> {
    let skip = |attempts, last_error: String| SkipRecord {
        question_id: base.question_id.clone(),
        variant,
        attempts,
        last_error,
    };
    let rendered = build_generation_request(base, variant, cfg.before_n, cfg.after_n).map_err(|e| skip(0, e.to_string()))?;
    let attempts = 1 + cfg.max_retries;
    let mut last = String::new();
    for attempt in 0..attempts {
        let seed = cfg.seed.map(|s| s.wrapping_add(attempt as u64));
        let req = rendered.chat_request(cfg.temperature, seed);
        let reply = match generator.chat(&req) {
            Ok(r) => r,
            Err(e) => {
                last = format!("generator error: {e}");
                continue;
            }
        };
        let batch = match parse_batch(&reply.content) {
            Ok(b) => b,
            Err(e) => {
                last = e;
                continue;
            }
        };
        let violations = check_batch(&batch, &rendered.request);
        if violations.is_empty() {
            return Ok(assemble_variant(base, &batch, variant));
        }
        last = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        log::debug!("{}/{} attempt {}: {last}", base.question_id, variant, attempt + 1);
    }
    Err(skip(attempts, last))
}

/// Generates the requested variants for every Base sample. Output order is
/// question first appearance, then Base, TB, SP, PED, HU; existing noisy
/// samples in the input are dropped and regenerated.
pub fn augment_corpus(corpus: &Corpus, generator: &dyn Backend, cfg: &AugmentConfig) -> AugmentOutput {
    let bases: Vec<&Sample> = corpus.samples.iter().filter(|s| s.variant == Variant::Base).collect();
    let mut variants = cfg.variants.clone();
    variants.retain(|v| *v != Variant::Base);
    variants.sort();
    variants.dedup();
    let jobs: Vec<(&Sample, Variant)> = bases.iter().flat_map(|b| variants.iter().map(move |v| (*b, *v))).collect();
    let run = || -> Vec<Result<Sample, SkipRecord>> {
        jobs.par_iter().map(|(b, v)| generate_one(b, *v, generator, cfg)).collect()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut generated: HashMap<(String, Variant), Sample> = HashMap::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(s) => {
                generated.insert((s.question_id.clone(), s.variant), s);
            }
            Err(rec) => {
                log::warn!("skipped {}/{} after {} attempts: {}", rec.question_id, rec.variant, rec.attempts, rec.last_error);
                skipped.push(rec);
            }
        }
    }
    let mut samples = Vec::new();
    for b in bases {
        samples.push(b.clone());
        for v in &variants {
            if let Some(s) = generated.remove(&(b.question_id.clone(), *v)) {
                samples.push(s);
            }
        }
    }
    AugmentOutput {
        corpus: Corpus::new(corpus.task, samples),
        skipped,
    }
}
