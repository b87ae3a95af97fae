//! Suite orchestration: every (sample, condition) pair, in parallel,
//! persisted incrementally and resumable by fingerprint.

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{prompts, run_condition, Condition, HarnessError, Matcher, RunConfig, Trajectory, TrajectoryStore};
use crate::backend::{sha256_hex, Backend};
use crate::corpus::{Corpus, Sample, Task, Variant};
use crate::diagnostics::evidence_f1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub question_id: String,
    pub variant: Variant,
    pub condition: String,
    pub correct: bool,
    pub evidence_f1: f64,
    pub tool_calls: usize,
    pub turns: usize,
}

/// Per-sample scores keyed by (question_id, variant, condition label).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub rows: Vec<ResultRow>,
}

impl ResultSet {
    pub fn get(&self, question_id: &str, variant: Variant, label: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.question_id == question_id && r.variant == variant && r.condition == label)
    }

    /// Index for repeated lookups.
    pub fn index(&self) -> HashMap<(&str, Variant, &str), &ResultRow> {
        self.rows
            .iter()
            .map(|r| ((r.question_id.as_str(), r.variant, r.condition.as_str()), r))
            .collect()
    }

    /// Condition labels present, in reporting order.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for r in &self.rows {
            if !labels.contains(&r.condition) {
                labels.push(r.condition.clone());
            }
        }
        labels.sort_by_key(|l| label_rank(l));
        labels
    }

    pub fn rows_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.condition == label)
    }

    pub fn extend(&mut self, other: ResultSet) {
        self.rows.extend(other.rows);
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
            let rec = rec.map_err(|e| format!("results row {}: {e}", i + 1))?;
            rows.push(ResultRow {
                question_id: rec.question_id,
                variant: rec.variant.parse().map_err(|e| format!("results row {}: {e}", i + 1))?,
                condition: rec.condition,
                correct: match rec.correct.as_str() {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => return Err(format!("results row {}: bad correct value '{other}'", i + 1)),
                },
                evidence_f1: rec.evidence_f1,
                tool_calls: rec.tool_calls,
                turns: rec.turns,
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    question_id: String,
    variant: String,
    condition: String,
    correct: String,
    evidence_f1: f64,
    tool_calls: usize,
    turns: usize,
}

/// Sort rank of a condition label: the seven conditions first, then any
/// other arm (gated runs) alphabetically.
fn label_rank(label: &str) -> (usize, String) {
    match Condition::ALL.iter().position(|c| c.id() == label) {
        Some(i) => (i, String::new()),
        None => (Condition::ALL.len(), label.to_string()),
    }
}

/// CSV rendering with columns
/// `question_id,variant,condition,correct,evidence_f1,tool_calls,turns`.
pub fn results_csv(results: &ResultSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &results.rows {
        w.serialize(CsvRow {
            question_id: r.question_id.clone(),
            variant: r.variant.as_str().to_string(),
            condition: r.condition.clone(),
            correct: if r.correct { "1" } else { "0" }.to_string(),
            evidence_f1: r.evidence_f1,
            tool_calls: r.tool_calls,
            turns: r.turns,
        })
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Scores a trajectory. OracleEvid answers are read against the Base
/// sample's chunks, so its evidence ids are scored against Base gold ids.
pub fn score_trajectory(traj: &Trajectory, sample: &Sample, base: Option<&Sample>, matcher: Matcher) -> ResultRow {
    let gold_ids = match (traj.condition, base) {
        (Condition::OracleEvid, Some(b)) if traj.arm.is_none() => &b.gold_evidence_ids,
        _ => &sample.gold_evidence_ids,
    };
    ResultRow {
        question_id: sample.question_id.clone(),
        variant: sample.variant,
        condition: traj.label().to_string(),
        correct: traj.error.is_none() && matcher.is_correct(&traj.prediction.final_answer, &sample.gold_answer),
        evidence_f1: evidence_f1(&traj.prediction.evidence_ids, gold_ids),
        tool_calls: traj.tool_calls.len(),
        turns: traj.turns_used,
    }
}

/// Digest identifying one unit of work: the sample (and its Base sibling
/// when the condition reads it), the condition label, everything in the
/// run configuration that can change a transcript, the backend, and the
/// bundled prompt templates.
pub fn fingerprint(
    sample: &Sample,
    base: Option<&Sample>,
    label: &str,
    task: Task,
    config: &RunConfig,
    backend: &str,
    extra: &serde_json::Value,
) -> String {
    let doc = json!({
        "sample": sample,
        "base": base,
        "label": label,
        "task": task,
        "max_turns": config.max_turns,
        "seed": config.seed,
        "temperature": config.temperature,
        "force_first_tool": config.force_first_tool,
        "backend": backend,
        "templates": prompts::template_hashes(),
        "extra": extra,
    });
    sha256_hex(&doc.to_string())
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub jobs: usize,
    /// Directory of the trajectory store; `None` keeps everything in memory.
    pub store: Option<PathBuf>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            jobs: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            store: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOutput {
    pub results: ResultSet,
    /// In corpus order within each label, labels in the order run.
    pub trajectories: Vec<Trajectory>,
    /// Pairs actually executed (the rest were resumed from the store).
    pub executed: usize,
}

/// Runs `work` for every sample under one label, reusing stored
/// trajectories whose fingerprint matches, and rewrites the label's store
/// file in corpus order at the end.
#[allow(clippy::too_many_arguments)]
pub fn run_labeled<F>(
    corpus: &Corpus,
    label: &str,
    config: &RunConfig,
    backend_name: &str,
    extra: &serde_json::Value,
    store: Option<&TrajectoryStore>,
    pool: &rayon::ThreadPool,
    work: F,
) -> Result<(Vec<(String, Trajectory)>, usize), HarnessError>
where
    F: Fn(&Sample, Option<&Sample>) -> Result<Trajectory, HarnessError> + Sync,
{
    let existing = match store {
        Some(s) => s.load(label)?,
        None => HashMap::new(),
    };
    let jobs: Vec<(&Sample, Option<&Sample>, String)> = corpus
        .samples
        .iter()
        .map(|s| {
            let base = corpus.base_of(&s.question_id);
            let fp = fingerprint(s, base, label, corpus.task, config, backend_name, extra);
            (s, base, fp)
        })
        .collect();
    let executed = jobs.iter().filter(|(_, _, fp)| !existing.contains_key(fp)).count();
    let done: Vec<Result<(String, Trajectory), HarnessError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(s, base, fp)| {
                if let Some(t) = existing.get(fp) {
                    return Ok((fp.clone(), t.clone()));
                }
                let t = work(s, *base)?;
                if let Some(store) = store {
                    store.append(label, fp, &t)?;
                }
                Ok((fp.clone(), t))
            })
            .collect()
    });
    let done = done.into_iter().collect::<Result<Vec<_>, _>>()?;
    if let Some(store) = store {
        store.rewrite(label, &done)?;
    }
    Ok((done, executed))
}

pub fn build_pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Store(format!("thread pool: {e}")))
}

/// Runs every condition on every sample.
pub fn run_suite(
    corpus: &Corpus,
    conditions: &[Condition],
    backend: &dyn Backend,
    config: &RunConfig,
    options: &SuiteOptions,
) -> Result<SuiteOutput, HarnessError> {
    let store = options.store.as_deref().map(TrajectoryStore::open).transpose()?;
    let pool = build_pool(options.jobs)?;
    let backend_name = backend.describe();
    let mut out = SuiteOutput::default();
    for &cond in conditions {
        let (done, executed) = run_labeled(
            corpus,
            cond.id(),
            config,
            &backend_name,
            &serde_json::Value::Null,
            store.as_ref(),
            &pool,
            |s, base| run_condition(cond, s, base, corpus.task, backend, config),
        )?;
        out.executed += executed;
        for (sample, (_, t)) in corpus.samples.iter().zip(done) {
            let base = corpus.base_of(&sample.question_id);
            out.results.rows.push(score_trajectory(&t, sample, base, config.matcher));
            out.trajectories.push(t);
        }
    }
    Ok(out)
}
