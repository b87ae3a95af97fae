//! Gated runs on the bundled toy corpus compared with plain Agent-Full.

use toolgap_core::backend::{Backend, Playbook, PlaybookBackend};
use toolgap_core::corpus::{toy_corpus, Corpus};
use toolgap_core::gate::{self, GateConfig, GateModel, TrainConfig};
use toolgap_core::harness::{run_condition, run_suite, Condition, GateAction, RunConfig, SuiteOptions};

pub fn demo_backend() -> PlaybookBackend {
    PlaybookBackend::new(Playbook::demo())
}

/// Trains a gate on the toy corpus the way `gate-train` does.
pub fn toy_model(seed: u64) -> GateModel {
    let corpus = toy_corpus();
    let backend = demo_backend();
    let opts = SuiteOptions {
        jobs: 1,
        store: None,
    };
    let plain = RunConfig::default();
    let forced = RunConfig {
        force_first_tool: true,
        ..RunConfig::default()
    };
    let mut out = run_suite(&corpus, &[Condition::Cot], &backend, &plain, &opts).unwrap();
    let full = run_suite(&corpus, &[Condition::Full], &backend, &forced, &opts).unwrap();
    out.results.extend(full.results);
    let set = gate::build_training_set(&corpus, &full.trajectories, &out.results, plain.max_turns, 1.0).unwrap();
    let cfg = TrainConfig {
        seed,
        ..Default::default()
    };
    gate::train_gate(&set.features, &set.labels, &set.groups, &cfg, 5, 0.05).unwrap().0
}

/// With the threshold at 1 every gated trajectory must equal Agent-Full
/// message for message. Returns the number of samples compared.
pub fn tau_one_neutral(model: &GateModel, corpus: &Corpus, backend: &dyn Backend) -> Result<usize, String> {
    let config = RunConfig::default();
    let gate = GateConfig {
        tau: 1.0,
        ..GateConfig::default()
    };
    for s in &corpus.samples {
        let base = corpus.base_of(&s.question_id);
        let plain = run_condition(Condition::Full, s, base, corpus.task, backend, &config).map_err(|e| e.to_string())?;
        let gated = gate::gated_inference(s, corpus.task, backend, model, &gate, &config).map_err(|e| e.to_string())?;
        let id = format!("{}/{}", s.question_id, s.variant);
        if gated.messages != plain.messages {
            return Err(format!("{id}: messages differ"));
        }
        if gated.tool_calls != plain.tool_calls || gated.prediction != plain.prediction {
            return Err(format!("{id}: tool calls or prediction differ"));
        }
        if gated.turns_used != plain.turns_used || gated.extra_turns_used != 0 {
            return Err(format!("{id}: turn counts differ"));
        }
        if gated.gate_decisions.iter().any(|d| d.action != GateAction::Commit) {
            return Err(format!("{id}: gate continued at tau = 1"));
        }
    }
    Ok(corpus.samples.len())
}

/// Largest `turns_used - max_turns` over the corpus with an always-continue
/// gate; fails when any trajectory exceeds `max_turns + max_extra`.
pub fn turn_overrun(corpus: &Corpus, backend: &dyn Backend, max_extra: usize, critic: bool) -> Result<isize, String> {
    let model = super::nn::constant_model(1.0, 0.05);
    let config = RunConfig::default();
    let gate = GateConfig {
        tau: 0.05,
        max_extra_turns: max_extra,
        critic,
    };
    let mut worst = isize::MIN;
    for s in &corpus.samples {
        let t = gate::gated_inference(s, corpus.task, backend, &model, &gate, &config).map_err(|e| e.to_string())?;
        if t.turns_used > config.max_turns + max_extra || t.extra_turns_used > max_extra {
            return Err(format!(
                "{}/{}: {} turns, {} extra",
                s.question_id, s.variant, t.turns_used, t.extra_turns_used
            ));
        }
        worst = worst.max(t.turns_used as isize - config.max_turns as isize);
    }
    Ok(worst)
}
