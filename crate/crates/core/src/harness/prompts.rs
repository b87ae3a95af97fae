//! Bundled prompt templates and message rendering.

use std::collections::BTreeMap;

use crate::backend::sha256_hex;
use crate::corpus::Task;

pub const GSM8K_COT: &str = include_str!("../../assets/prompts/gsm8k_cot.txt");
pub const GSM8K_AGENT: &str = include_str!("../../assets/prompts/gsm8k_agent.txt");
pub const HOTPOTQA_COT: &str = include_str!("../../assets/prompts/hotpotqa_cot.txt");
pub const HOTPOTQA_AGENT: &str = include_str!("../../assets/prompts/hotpotqa_agent.txt");

pub const GATE_VERIFY: &str = include_str!("../../assets/prompts/gate_verify.txt");
pub const GATE_ERROR_CORRECTION: &str = include_str!("../../assets/prompts/gate_error_correction.txt");
pub const GATE_REDERIVE: &str = include_str!("../../assets/prompts/gate_rederive.txt");
pub const GATE_REPEATED: &str = include_str!("../../assets/prompts/gate_repeated.txt");
pub const GATE_SENSE_CHECK: &str = include_str!("../../assets/prompts/gate_sense_check.txt");

pub const DISTRACTOR_TB: &str = include_str!("../../assets/prompts/distractor_tb.txt");
pub const DISTRACTOR_SP: &str = include_str!("../../assets/prompts/distractor_sp.txt");
pub const DISTRACTOR_PED: &str = include_str!("../../assets/prompts/distractor_ped.txt");
pub const DISTRACTOR_HU: &str = include_str!("../../assets/prompts/distractor_hu.txt");

/// System prompt for the no-tool chain-of-thought condition.
pub fn cot_system(task: Task) -> &'static str {
    match task {
        Task::Gsm8k => GSM8K_COT.trim_end(),
        Task::HotpotQa => HOTPOTQA_COT.trim_end(),
    }
}

/// System prompt shared by the FC-style and all agent conditions.
pub fn agent_system(task: Task) -> &'static str {
    match task {
        Task::Gsm8k => GSM8K_AGENT.trim_end(),
        Task::HotpotQa => HOTPOTQA_AGENT.trim_end(),
    }
}

/// `[i] text` lines, one per chunk.
pub fn numbered_chunks<S: AsRef<str>>(chunks: &[S]) -> String {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{i}] {}", c.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn user_message<S: AsRef<str>>(question: &str, chunks: &[S]) -> String {
    format!("Question: {question}\n\nInformation chunks:\n{}", numbered_chunks(chunks))
}

/// Substitutes `{name}` placeholders.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.trim_end().to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// SHA-256 of every bundled template, recorded in run metadata.
pub fn template_hashes() -> BTreeMap<String, String> {
    [
        ("gsm8k_cot", GSM8K_COT),
        ("gsm8k_agent", GSM8K_AGENT),
        ("hotpotqa_cot", HOTPOTQA_COT),
        ("hotpotqa_agent", HOTPOTQA_AGENT),
        ("gate_verify", GATE_VERIFY),
        ("gate_error_correction", GATE_ERROR_CORRECTION),
        ("gate_rederive", GATE_REDERIVE),
        ("gate_repeated", GATE_REPEATED),
        ("gate_sense_check", GATE_SENSE_CHECK),
        ("distractor_tb", DISTRACTOR_TB),
        ("distractor_sp", DISTRACTOR_SP),
        ("distractor_ped", DISTRACTOR_PED),
        ("distractor_hu", DISTRACTOR_HU),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), sha256_hex(v)))
    .collect()
}
