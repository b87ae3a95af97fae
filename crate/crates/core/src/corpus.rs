//! Sem-Distractor corpora: data model, JSONL storage, validation and
//! question-level splitting.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("{message} at line {line}")]
    Invalid { line: usize, message: String },
    #[error("duplicate (question_id, variant) = ({question_id}, {variant}) at line {line}")]
    Duplicate {
        line: usize,
        question_id: String,
        variant: Variant,
    },
    #[error("question {0} has variants but no Base sample")]
    MissingBase(String),
    #[error("insufficient questions: requested {requested}, corpus has {available}")]
    InsufficientQuestions { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkRole {
    Evidence,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: usize,
    pub text: String,
    pub role: ChunkRole,
}

/// Distractor variant of a sample. `Base` is the unperturbed original.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Base,
    #[serde(rename = "TB")]
    Tb,
    #[serde(rename = "SP")]
    Sp,
    #[serde(rename = "PED")]
    Ped,
    #[serde(rename = "HU")]
    Hu,
}

impl Variant {
    /// Canonical reporting order: Base, TB, PED, HU, SP.
    pub const REPORT_ORDER: [Variant; 5] =
        [Variant::Base, Variant::Tb, Variant::Ped, Variant::Hu, Variant::Sp];
    pub const NOISY: [Variant; 4] = [Variant::Tb, Variant::Sp, Variant::Ped, Variant::Hu];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Base => "Base",
            Variant::Tb => "TB",
            Variant::Sp => "SP",
            Variant::Ped => "PED",
            Variant::Hu => "HU",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "tb" => Ok(Variant::Tb),
            "sp" => Ok(Variant::Sp),
            "ped" => Ok(Variant::Ped),
            "hu" => Ok(Variant::Hu),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "GSM8K")]
    Gsm8k,
    #[serde(rename = "HotPotQA")]
    HotpotQa,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Gsm8k => "GSM8K",
            Task::HotpotQa => "HotPotQA",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gsm8k" => Ok(Task::Gsm8k),
            "hotpotqa" | "hotpot" => Ok(Task::HotpotQa),
            other => Err(format!("unknown task '{other}'")),
        }
    }
}

/// One benchmark item. Field order is the on-disk field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub question_id: String,
    pub variant: Variant,
    pub question: String,
    pub chunks: Vec<Chunk>,
    pub gold_answer: String,
    pub gold_evidence_ids: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_step_count: Option<u32>,
}

impl Sample {
    pub fn noise_ids(&self) -> BTreeSet<usize> {
        self.chunks
            .iter()
            .filter(|c| c.role == ChunkRole::Noise)
            .map(|c| c.id)
            .collect()
    }

    pub fn evidence_chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.iter().filter(|c| c.role == ChunkRole::Evidence)
    }

    /// The question and chunk texts only: what a model (or an inference-time
    /// component) is allowed to see.
    pub fn public_view(&self) -> PublicSample<'_> {
        PublicSample {
            question: &self.question,
            chunks: self.chunks.iter().map(|c| c.text.as_str()).collect(),
        }
    }
}

/// Gold-free view of a sample.
#[derive(Debug, Clone)]
pub struct PublicSample<'a> {
    pub question: &'a str,
    pub chunks: Vec<&'a str>,
}

/// Returns every violated sample invariant; empty means valid.
pub fn validate_sample(s: &Sample) -> Vec<String> {
    let mut out = Vec::new();
    let n = s.chunks.len();
    if s.chunks.iter().enumerate().any(|(i, c)| c.id != i) {
        out.push("non-contiguous chunk ids".to_string());
    }
    for c in &s.chunks {
        if c.text.trim().is_empty() {
            out.push(format!("chunk {} text is empty", c.id));
        }
    }
    let role_of: HashMap<usize, ChunkRole> = s.chunks.iter().map(|c| (c.id, c.role)).collect();
    let mut out_of_range = false;
    for &id in &s.gold_evidence_ids {
        match role_of.get(&id) {
            None => out_of_range = true,
            Some(ChunkRole::Noise) => {
                out.push(format!("gold evidence id {id} has role noise"));
            }
            Some(ChunkRole::Evidence) => {}
        }
    }
    if out_of_range {
        out.push("gold evidence id out of range".to_string());
    }
    for c in &s.chunks {
        if c.role == ChunkRole::Evidence && !s.gold_evidence_ids.contains(&c.id) {
            out.push(format!("evidence chunk {} missing from gold_evidence_ids", c.id));
        }
    }
    if s.variant == Variant::Base && s.chunks.iter().any(|c| c.role == ChunkRole::Noise) {
        out.push("Base variant contains noise".to_string());
    }
    if s.gold_step_count == Some(0) {
        out.push("gold_step_count must be positive".to_string());
    }
    if n == 0 {
        out.push("chunks is empty".to_string());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub task: Task,
    pub samples: Vec<Sample>,
}

impl Corpus {
    pub fn new(task: Task, samples: Vec<Sample>) -> Self {
        Self { task, samples }
    }

    /// Distinct question ids in first-appearance order.
    pub fn question_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter(|s| seen.insert(s.question_id.as_str()))
            .map(|s| s.question_id.as_str())
            .collect()
    }

    pub fn base_of(&self, question_id: &str) -> Option<&Sample> {
        self.samples
            .iter()
            .find(|s| s.question_id == question_id && s.variant == Variant::Base)
    }

    pub fn get(&self, question_id: &str, variant: Variant) -> Option<&Sample> {
        self.samples
            .iter()
            .find(|s| s.question_id == question_id && s.variant == variant)
    }

    /// Checks the corpus-level invariants (unique keys, Base present).
    pub fn check_invariants(&self) -> Result<(), CorpusError> {
        let mut keys = HashSet::new();
        for (i, s) in self.samples.iter().enumerate() {
            if !keys.insert((s.question_id.as_str(), s.variant)) {
                return Err(CorpusError::Duplicate {
                    line: i + 1,
                    question_id: s.question_id.clone(),
                    variant: s.variant,
                });
            }
        }
        for q in self.question_ids() {
            if !keys.contains(&(q, Variant::Base)) {
                return Err(CorpusError::MissingBase(q.to_string()));
            }
        }
        Ok(())
    }
}

/// Parses a JSONL corpus from a string. Blank lines are skipped.
pub fn parse_corpus(task: Task, content: &str) -> Result<Corpus, CorpusError> {
    let mut samples = Vec::new();
    let mut keys: HashSet<(String, Variant)> = HashSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(line).map_err(|e| CorpusError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        let violations = validate_sample(&sample);
        if let Some(first) = violations.into_iter().next() {
            return Err(CorpusError::Invalid {
                line: line_no,
                message: first,
            });
        }
        if !keys.insert((sample.question_id.clone(), sample.variant)) {
            return Err(CorpusError::Duplicate {
                line: line_no,
                question_id: sample.question_id,
                variant: sample.variant,
            });
        }
        samples.push(sample);
    }
    let corpus = Corpus::new(task, samples);
    corpus.check_invariants()?;
    Ok(corpus)
}

pub fn load_corpus(task: Task, path: &Path) -> Result<Corpus, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(task, &content)
}

/// Canonical JSONL rendering: one compact object per line, schema field
/// order, trailing newline after every record.
pub fn render_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for s in &corpus.samples {
        out.push_str(&serde_json::to_string(s).expect("sample serializes"));
        out.push('\n');
    }
    out
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    w.write_all(render_corpus(corpus).as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Bundled 12-sample GSM8K corpus used by the demo playbook and tests.
pub const TOY_CORPUS_JSONL: &str = include_str!("../assets/toy_corpus.jsonl");

pub fn toy_corpus() -> Corpus {
    parse_corpus(Task::Gsm8k, TOY_CORPUS_JSONL).expect("bundled corpus parses")
}

/// Splits by question id so that every variant of a question lands on the
/// same side. Deterministic for a fixed seed; sample order is preserved.
pub fn split_corpus(
    corpus: &Corpus,
    train_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<(Corpus, Corpus), CorpusError> {
    let mut ids: Vec<&str> = corpus.question_ids();
    if train_n + test_n > ids.len() {
        return Err(CorpusError::InsufficientQuestions {
            requested: train_n + test_n,
            available: ids.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train: HashSet<&str> = ids[..train_n].iter().copied().collect();
    let test: HashSet<&str> = ids[train_n..train_n + test_n].iter().copied().collect();
    let pick = |keep: &HashSet<&str>| {
        Corpus::new(
            corpus.task,
            corpus
                .samples
                .iter()
                .filter(|s| keep.contains(s.question_id.as_str()))
                .cloned()
                .collect(),
        )
    };
    Ok((pick(&train), pick(&test)))
}
