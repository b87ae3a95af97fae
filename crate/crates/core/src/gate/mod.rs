//! Continue/commit gate consulted at every termination attempt of the
//! function-calling loop: labels from hindsight, a standardized MLP over
//! the gate state, group-aware cross-validation, and gated inference with
//! continuation prompts and loop guards.

pub mod cv;
pub mod features;
pub mod mlp;

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backend::{sha256_hex, Backend};
use crate::corpus::{Corpus, Sample, Task, Variant};
use crate::harness::{
    agent_loop, agent_spec, build_pool, prompts, run_labeled, score_trajectory, trajectory_from_loop, AttemptOutcome,
    AttemptState, Condition, GateAction, GateDecision, HarnessError, Prediction, ResultSet, RunConfig, SuiteOptions,
    SuiteOutput, Trajectory, TrajectoryStore,
};
pub use cv::{auc, group_kfold, Standardizer};
pub use features::{expressions, extract_features, hash_text, FEATURE_DIM, NUMERIC_NAMES};
pub use mlp::{Mlp, TrainConfig};

pub const MODEL_FORMAT: &str = "toolgap-gate";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("training set has a single class ({0})")]
    SingleClass(&'static str),
    #[error("need at least two question groups, got {0}")]
    TooFewGroups(usize),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("training inputs disagree in length")]
    Length,
    #[error("gate model: {0}")]
    Model(String),
    #[error("missing {what} result for {question_id}/{variant}")]
    MissingResult {
        what: &'static str,
        question_id: String,
        variant: Variant,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateLabel {
    pub decision: GateAction,
    pub weight: f64,
    pub priority: u8,
}

/// Hindsight label with the default weighting.
pub fn label_sample(tool_correct: bool, cot_correct: bool, tool_calls: usize) -> GateLabel {
    label_sample_weighted(tool_correct, cot_correct, tool_calls, 1.0)
}

/// Priority rules: tool right → commit; CoT right → continue (weight 3);
/// fewer than two calls → continue (weight 2 × `p3_boost`); else commit.
pub fn label_sample_weighted(tool_correct: bool, cot_correct: bool, tool_calls: usize, p3_boost: f64) -> GateLabel {
    let (decision, weight, priority) = if tool_correct {
        (GateAction::Commit, 1.0, 1)
    } else if cot_correct {
        (GateAction::Continue, 3.0, 2)
    } else if tool_calls < 2 {
        (GateAction::Continue, 2.0 * p3_boost, 3)
    } else {
        (GateAction::Commit, 1.0, 4)
    };
    GateLabel {
        decision,
        weight,
        priority,
    }
}

/// Gate state of a finished (ungated) agent trajectory: the state at its
/// first and only termination attempt.
pub fn trajectory_features(traj: &Trajectory, sample: &Sample, max_turns: usize) -> Vec<f64> {
    let view = sample.public_view();
    let raw = traj
        .messages
        .iter()
        .rev()
        .find(|m| m.role == crate::backend::Role::Assistant && !m.has_tool_calls())
        .map(|m| m.content.as_str())
        .unwrap_or(&traj.raw_final);
    extract_features(&AttemptState {
        question: view.question,
        chunks: &view.chunks,
        messages: &traj.messages,
        tool_calls: &traj.tool_calls,
        turns_used: traj.turns_used,
        max_turns,
        extra_turns_used: 0,
        candidate: &traj.prediction,
        raw,
        previous: None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub keys: Vec<(String, Variant)>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<GateLabel>,
    pub groups: Vec<String>,
}

/// Pairs every Full trajectory with its Full and CoT outcomes.
pub fn build_training_set(
    corpus: &Corpus,
    trajectories: &[Trajectory],
    results: &ResultSet,
    max_turns: usize,
    p3_boost: f64,
) -> Result<TrainingSet, GateError> {
    let index = results.index();
    let mut set = TrainingSet::default();
    for t in trajectories.iter().filter(|t| t.label() == Condition::Full.id()) {
        let key = |c: Condition| (t.question_id.as_str(), t.variant, c.id());
        let missing = |what| GateError::MissingResult {
            what,
            question_id: t.question_id.clone(),
            variant: t.variant,
        };
        let full = index.get(&key(Condition::Full)).ok_or_else(|| missing("full"))?;
        let cot = index.get(&key(Condition::Cot)).ok_or_else(|| missing("cot"))?;
        let sample = corpus.get(&t.question_id, t.variant).ok_or_else(|| missing("corpus"))?;
        set.keys.push((t.question_id.clone(), t.variant));
        set.features.push(trajectory_features(t, sample, max_turns));
        set.labels.push(label_sample_weighted(full.correct, cot.correct, t.tool_calls.len(), p3_boost));
        set.groups.push(t.question_id.clone());
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub folds: usize,
    pub train_rows: usize,
    pub continue_rows: usize,
    pub validated: bool,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub network: Mlp,
    pub tau: f64,
    pub metadata: ModelMetadata,
}

impl GateModel {
    fn check(&self, f: &[f64]) -> Result<(), GateError> {
        if f.len() != self.feature_dim {
            return Err(GateError::Dimension {
                expected: self.feature_dim,
                got: f.len(),
            });
        }
        Ok(())
    }

    pub fn logit(&self, f: &[f64]) -> Result<f64, GateError> {
        self.check(f)?;
        Ok(self.network.logit(&self.standardizer.transform(f)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GateError> {
        let m: GateModel = serde_json::from_str(text).map_err(|e| GateError::Model(e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(GateError::Model(format!("unsupported format {} v{}", m.format, m.version)));
        }
        if m.network.input_dim() != m.feature_dim || m.standardizer.mean.len() != m.feature_dim {
            return Err(GateError::Model("layer sizes disagree with feature_dim".into()));
        }
        Ok(m)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("model serializes"))
    }
}

/// Probability of continuing.
pub fn predict_continue(m: &GateModel, f: &[f64]) -> Result<f64, GateError> {
    Ok(mlp::sigmoid(m.logit(f)?))
}

/// Logit threshold equivalent to `p >= tau`. Comparing logits avoids
/// sigmoid saturation: at `tau = 1` the gate never continues.
pub fn logit_threshold(tau: f64) -> f64 {
    if tau >= 1.0 {
        f64::INFINITY
    } else if tau <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (tau / (1.0 - tau)).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_groups: BTreeSet<String>,
    pub test_groups: BTreeSet<String>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: Option<f64>,
    pub mean_auc: Option<f64>,
}

struct Fitted {
    standardizer: Standardizer,
    network: Mlp,
    report: mlp::FitReport,
}

fn fit_rows(
    features: &[Vec<f64>],
    ys: &[f64],
    ws: &[f64],
    groups: &[String],
    rows: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Fitted, GateError> {
    let positives = rows.iter().filter(|&&i| ys[i] > 0.5).count();
    if positives == 0 {
        return Err(GateError::SingleClass("all commit"));
    }
    if positives == rows.len() {
        return Err(GateError::SingleClass("all continue"));
    }
    let refs: Vec<&[f64]> = rows.iter().map(|&i| features[i].as_slice()).collect();
    let standardizer = Standardizer::fit(&refs);
    let xs: Vec<Vec<f64>> = features.iter().map(|f| standardizer.transform(f)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut uniq: Vec<&str> = rows.iter().map(|&i| groups[i].as_str()).collect();
    uniq.sort_unstable();
    uniq.dedup();
    uniq.shuffle(&mut rng);
    let n_val = (uniq.len() as f64 * cfg.validation_fraction).round() as usize;
    let held: BTreeSet<&str> = uniq.iter().take(n_val.min(uniq.len().saturating_sub(1))).copied().collect();
    let (mut train, mut valid): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| !held.contains(groups[i].as_str()));
    let train_pos = train.iter().filter(|&&i| ys[i] > 0.5).count();
    if train_pos == 0 || train_pos == train.len() {
        log::debug!("validation split leaves a single class; monitoring training loss");
        train = rows.to_vec();
        valid.clear();
    }

    let mut sizes = vec![features[rows[0]].len()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut network = Mlp::new(&sizes, &mut rng);
    let report = mlp::fit(&mut network, &xs, ys, ws, &train, &valid, cfg, &mut rng);
    Ok(Fitted {
        standardizer,
        network,
        report,
    })
}

/// Cross-validates with `folds` group folds (skipped when `folds < 2`),
/// then trains the deployed model on all rows.
pub fn train_gate(
    features: &[Vec<f64>],
    labels: &[GateLabel],
    groups: &[String],
    cfg: &TrainConfig,
    folds: usize,
    tau: f64,
) -> Result<(GateModel, CvReport), GateError> {
    if features.len() != labels.len() || features.len() != groups.len() {
        return Err(GateError::Length);
    }
    let dim = features.first().map_or(0, Vec::len);
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(GateError::Dimension {
            expected: dim,
            got: bad.len(),
        });
    }
    let n_groups = groups.iter().collect::<BTreeSet<_>>().len();
    if n_groups < 2 {
        return Err(GateError::TooFewGroups(n_groups));
    }
    let ys: Vec<f64> = labels
        .iter()
        .map(|l| if l.decision == GateAction::Continue { 1.0 } else { 0.0 })
        .collect();
    let ws: Vec<f64> = labels.iter().map(|l| l.weight).collect();
    let all: Vec<usize> = (0..features.len()).collect();

    let mut reports = Vec::new();
    let assignment = if folds >= 2 { group_kfold(groups, folds) } else { Vec::new() };
    for (k, test) in assignment.into_iter().enumerate() {
        let test_set: BTreeSet<usize> = test.iter().copied().collect();
        let train: Vec<usize> = all.iter().copied().filter(|i| !test_set.contains(i)).collect();
        let names = |idx: &[usize]| idx.iter().map(|&i| groups[i].clone()).collect::<BTreeSet<_>>();
        let mut fr = FoldReport {
            fold: k,
            train_rows: train.len(),
            test_rows: test.len(),
            train_groups: names(&train),
            test_groups: names(&test),
            accuracy: None,
            auc: None,
            skipped: None,
        };
        match fit_rows(features, &ys, &ws, groups, &train, cfg, cfg.seed.wrapping_add(1 + k as u64)) {
            Ok(fit) => {
                let scores: Vec<f64> = test
                    .iter()
                    .map(|&i| fit.network.predict(&fit.standardizer.transform(&features[i])))
                    .collect();
                let truth: Vec<bool> = test.iter().map(|&i| ys[i] > 0.5).collect();
                let hits = scores.iter().zip(&truth).filter(|(s, t)| (**s >= 0.5) == **t).count();
                fr.accuracy = Some(hits as f64 / test.len().max(1) as f64);
                fr.auc = auc(&scores, &truth);
            }
            Err(e) => fr.skipped = Some(e.to_string()),
        }
        reports.push(fr);
    }
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let cv = CvReport {
        mean_accuracy: mean(reports.iter().filter_map(|r| r.accuracy).collect()),
        mean_auc: mean(reports.iter().filter_map(|r| r.auc).collect()),
        folds: reports,
    };

    let fit = fit_rows(features, &ys, &ws, groups, &all, cfg, cfg.seed)?;
    let model = GateModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        feature_dim: dim,
        feature_names: feature_names(dim),
        standardizer: fit.standardizer,
        network: fit.network,
        tau,
        metadata: ModelMetadata {
            seed: cfg.seed,
            epochs: fit.report.epochs,
            best_epoch: fit.report.best_epoch,
            folds: cv.folds.len(),
            train_rows: features.len(),
            continue_rows: ys.iter().filter(|y| **y > 0.5).count(),
            validated: fit.report.validated,
            config: cfg.clone(),
        },
    };
    Ok((model, cv))
}

fn feature_names(dim: usize) -> Vec<String> {
    if dim != FEATURE_DIM {
        return (0..dim).map(|i| format!("f{i}")).collect();
    }
    let mut names: Vec<String> = NUMERIC_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend((0..features::REASONING_BINS).map(|i| format!("reasoning_hash_{i}")));
    names.extend((0..features::TOOL_BINS).map(|i| format!("tool_hash_{i}")));
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub tau: f64,
    pub max_extra_turns: usize,
    pub critic: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            tau: 0.05,
            max_extra_turns: 3,
            critic: false,
        }
    }
}

impl GateConfig {
    pub fn label(&self) -> &'static str {
        if self.critic {
            crate::diagnostics::report::GATE_CRITIC_LABEL
        } else {
            crate::diagnostics::report::GATE_LABEL
        }
    }
}

/// Uses of the same calculator expression at which the gate stops.
pub const DUPLICATE_LIMIT: usize = 3;

fn last_output(state: &AttemptState<'_>) -> String {
    state
        .tool_calls
        .last()
        .map(|x| x.result.output.clone())
        .unwrap_or_else(|| "none".into())
}

/// Continuation prompt for a state. `nth` counts earlier continuations in
/// this attempt and alternates the two reflection prompts.
pub fn continuation_prompt(state: &AttemptState<'_>, critic: bool, nth: usize) -> String {
    let prev = last_output(state);
    if !critic {
        return prompts::fill(prompts::GATE_VERIFY.trim_end(), &[("prev_output", &prev)]);
    }
    let exprs = expressions(state.tool_calls);
    if let Some(last) = exprs.last() {
        if exprs[..exprs.len() - 1].contains(last) {
            return prompts::fill(
                prompts::GATE_REPEATED.trim_end(),
                &[("repeated_expression", last), ("prev_output", &prev)],
            );
        }
    }
    if state.tool_calls.last().is_some_and(|x| !x.result.ok) {
        return prompts::fill(prompts::GATE_ERROR_CORRECTION.trim_end(), &[("prev_output", &prev)]);
    }
    if nth.is_multiple_of(2) {
        prompts::fill(
            prompts::GATE_SENSE_CHECK.trim_end(),
            &[
                ("question", state.question),
                ("evidence_chunks", &prompts::numbered_chunks(state.chunks)),
                ("current_answer", state.candidate.final_answer.as_str()),
            ],
        )
    } else {
        prompts::fill(prompts::GATE_REDERIVE.trim_end(), &[("prev_output", &prev)])
    }
}

fn same_answer(a: &Prediction, b: &Prediction) -> bool {
    a.final_answer.trim() == b.final_answer.trim()
}

/// Decides one termination attempt.
pub fn gate_decision(model: &GateModel, gate: &GateConfig, state: &AttemptState<'_>, nth: usize) -> AttemptOutcome {
    let f = extract_features(state);
    let (logit, p) = match model.logit(&f) {
        Ok(z) => (z, mlp::sigmoid(z)),
        Err(e) => {
            log::warn!("gate features rejected: {e}");
            (f64::NEG_INFINITY, 0.0)
        }
    };
    let commit = |reason: &str| AttemptOutcome {
        record: Some(GateDecision {
            turn: state.turns_used,
            p_continue: p,
            action: GateAction::Commit,
            reason: reason.into(),
            prompt: None,
        }),
        continuation: None,
    };
    if logit < logit_threshold(gate.tau) {
        return commit("below threshold");
    }
    if state.extra_turns_used >= gate.max_extra_turns {
        return commit("extra-turn budget exhausted");
    }
    if state.previous.is_some_and(|prev| same_answer(prev, state.candidate)) {
        return commit("no progress");
    }
    let mut uses: HashMap<String, usize> = HashMap::new();
    for e in expressions(state.tool_calls) {
        *uses.entry(e).or_default() += 1;
    }
    if uses.values().any(|&n| n >= DUPLICATE_LIMIT) {
        return commit("duplicate expression limit");
    }
    let prompt = continuation_prompt(state, gate.critic, nth);
    AttemptOutcome {
        record: Some(GateDecision {
            turn: state.turns_used,
            p_continue: p,
            action: GateAction::Continue,
            reason: "above threshold".into(),
            prompt: Some(prompt.clone()),
        }),
        continuation: Some(prompt),
    }
}

/// Agent-Full with the gate consulted at each termination attempt.
pub fn gated_inference(
    sample: &Sample,
    task: Task,
    backend: &dyn Backend,
    model: &GateModel,
    gate: &GateConfig,
    config: &RunConfig,
) -> Result<Trajectory, HarnessError> {
    let spec = agent_spec(Condition::Full, sample, None, task)?;
    let mut continuations = 0usize;
    let mut policy = |state: &AttemptState<'_>| {
        let out = gate_decision(model, gate, state, continuations);
        if out.continuation.is_some() {
            continuations += 1;
        }
        out
    };
    let out = agent_loop(&spec, backend, config, &mut policy);
    let mut t = trajectory_from_loop(Condition::Full, sample, out);
    t.arm = Some(gate.label().to_string());
    Ok(t)
}

/// Runs the gated arm over a corpus, resumable like the condition suite.
pub fn run_gated(
    corpus: &Corpus,
    backend: &dyn Backend,
    model: &GateModel,
    gate: &GateConfig,
    config: &RunConfig,
    options: &SuiteOptions,
) -> Result<SuiteOutput, HarnessError> {
    let store = options.store.as_deref().map(TrajectoryStore::open).transpose()?;
    let pool = build_pool(options.jobs)?;
    let extra = json!({
        "model": model.digest(),
        "tau": gate.tau,
        "max_extra_turns": gate.max_extra_turns,
        "critic": gate.critic,
    });
    let (done, executed) = run_labeled(
        corpus,
        gate.label(),
        config,
        &backend.describe(),
        &extra,
        store.as_ref(),
        &pool,
        |s, _| gated_inference(s, corpus.task, backend, model, gate, config),
    )?;
    let mut out = SuiteOutput {
        executed,
        ..Default::default()
    };
    for (sample, (_, t)) in corpus.samples.iter().zip(done) {
        let base = corpus.base_of(&sample.question_id);
        out.results.rows.push(score_trajectory(&t, sample, base, config.matcher));
        out.trajectories.push(t);
    }
    Ok(out)
}
