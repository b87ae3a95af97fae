//! Report bundle computed from a result set (and, when available, the
//! trajectories and corpus needed for failure classification).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fixtures::closure_cell;
use super::{
    attribute_results, attribution_report, capability_overlap, classify_failure, cross_tabulate, decompose_gap,
    failure_distribution, gap_closure, AttributionCategory, AttributionReport, CrossTabRow, DeltaReport,
    DiagnosticsError, FailureDistribution, FailureType, GapClosure, OverlapReport, Percent, SampleKey,
};
use crate::corpus::{Corpus, Variant};
use crate::harness::{Condition, ResultSet, Trajectory};

/// Label of the gated arm without and with critic prompts.
pub const GATE_LABEL: &str = "gate";
pub const GATE_CRITIC_LABEL: &str = "gate_critic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub label: String,
    /// `None` is the overall row.
    pub variant: Option<Variant>,
    pub n: usize,
    pub correct: usize,
    pub accuracy: Percent,
    pub evidence_f1: f64,
    pub avg_tool_calls: f64,
}

/// Accuracy, mean evidence F1 and mean tool calls for every label ×
/// variant present, plus an overall row per label.
pub fn accuracy_table(results: &ResultSet) -> Vec<AccuracyCell> {
    let mut cells = Vec::new();
    for label in results.labels() {
        let rows: Vec<_> = results.rows_for(&label).collect();
        let mut groups: Vec<(Option<Variant>, Vec<_>)> = Variant::REPORT_ORDER
            .into_iter()
            .map(|v| (Some(v), rows.iter().copied().filter(|r| r.variant == v).collect::<Vec<_>>()))
            .filter(|(_, g)| !g.is_empty())
            .collect();
        groups.push((None, rows.clone()));
        for (variant, group) in groups {
            let n = group.len();
            let correct = group.iter().filter(|r| r.correct).count();
            let (f1, calls) = if n == 0 {
                (0.0, 0.0)
            } else {
                (
                    group.iter().map(|r| r.evidence_f1).sum::<f64>() / n as f64,
                    group.iter().map(|r| r.tool_calls as f64).sum::<f64>() / n as f64,
                )
            };
            cells.push(AccuracyCell {
                label: label.clone(),
                variant,
                n,
                correct,
                accuracy: Percent::from_counts(correct as u64, n as u64).unwrap_or_default(),
                evidence_f1: f1,
                avg_tool_calls: calls,
            });
        }
    }
    cells
}

/// Per-condition accuracy for one variant (or overall).
pub fn condition_accuracies(cells: &[AccuracyCell], variant: Option<Variant>) -> BTreeMap<Condition, Percent> {
    cells
        .iter()
        .filter(|c| c.variant == variant)
        .filter_map(|c| c.label.parse::<Condition>().ok().map(|cond| (cond, c.accuracy)))
        .collect()
}

fn label_accuracy(cells: &[AccuracyCell], label: &str) -> Option<Percent> {
    cells
        .iter()
        .find(|c| c.label == label && c.variant.is_none())
        .map(|c| c.accuracy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateComparison {
    pub full: Percent,
    pub gate: Option<Percent>,
    pub critic: Option<Percent>,
    pub cot: Percent,
    pub closure: Option<GapClosure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub task: Option<String>,
    pub model: Option<String>,
    pub matcher: Option<String>,
    pub seed: Option<u64>,
    pub temperature: Option<f64>,
    pub max_turns: Option<usize>,
    pub template_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub accuracy: Vec<AccuracyCell>,
    /// Overall decomposition, when the four chain conditions are present.
    pub deltas: Option<DeltaReport>,
    pub deltas_by_variant: BTreeMap<Variant, DeltaReport>,
    pub attribution: Option<AttributionReport>,
    pub cross_tab: Vec<CrossTabRow>,
    pub overlap: Option<OverlapReport>,
    pub failure_distributions: Vec<FailureDistribution>,
    pub gate: Option<GateComparison>,
}

fn chain_present(results: &ResultSet) -> bool {
    let labels = results.labels();
    [Condition::Cot, Condition::FcStyle, Condition::Noop, Condition::Full]
        .iter()
        .all(|c| labels.iter().any(|l| l == c.id()))
}

/// Failure types of every incorrect agent trajectory, grouped by label.
pub fn classify_all(
    corpus: &Corpus,
    results: &ResultSet,
    trajectories: &[Trajectory],
) -> Result<BTreeMap<String, BTreeMap<SampleKey, FailureType>>, DiagnosticsError> {
    let index = results.index();
    let mut out: BTreeMap<String, BTreeMap<SampleKey, FailureType>> = BTreeMap::new();
    for t in trajectories {
        if !t.condition.uses_tools() {
            continue;
        }
        let Some(row) = index.get(&(t.question_id.as_str(), t.variant, t.label())) else {
            continue;
        };
        if row.correct {
            continue;
        }
        let sample = corpus.get(&t.question_id, t.variant).ok_or_else(|| {
            DiagnosticsError::Precondition(format!("{}/{} not in corpus", t.question_id, t.variant))
        })?;
        let ft = classify_failure(t, false, row.evidence_f1, &sample.gold_answer, sample.gold_step_count)?;
        out.entry(t.label().to_string())
            .or_default()
            .insert((t.question_id.clone(), t.variant), ft);
    }
    Ok(out)
}

/// Builds the bundle. `classification` supplies the corpus and
/// trajectories for the taxonomy tables; without it those stay empty.
pub fn build_report(
    results: &ResultSet,
    classification: Option<(&Corpus, &[Trajectory])>,
    metadata: RunMetadata,
) -> Result<ReportBundle, DiagnosticsError> {
    let accuracy = accuracy_table(results);
    let chain = chain_present(results);
    let deltas = if chain {
        Some(decompose_gap(&condition_accuracies(&accuracy, None))?)
    } else {
        None
    };
    let mut deltas_by_variant = BTreeMap::new();
    if chain {
        for v in Variant::REPORT_ORDER {
            let acc = condition_accuracies(&accuracy, Some(v));
            if let Ok(d) = decompose_gap(&acc) {
                deltas_by_variant.insert(v, d);
            }
        }
    }
    let attrs = if chain { attribute_results(results) } else { BTreeMap::new() };
    let attribution = chain.then(|| attribution_report(&attrs));
    let overlap = chain.then(|| capability_overlap(results));

    let mut cross_tab = Vec::new();
    let mut failure_distributions = Vec::new();
    if let Some((corpus, trajectories)) = classification {
        let types = classify_all(corpus, results, trajectories)?;
        if let Some(full_types) = types.get(Condition::Full.id()) {
            cross_tab = cross_tabulate(&attrs, full_types);
        }
        for (label, t) in &types {
            failure_distributions.push(failure_distribution(label, t));
        }
        failure_distributions.sort_by_key(|d| {
            Condition::ALL
                .iter()
                .position(|c| c.id() == d.condition)
                .unwrap_or(Condition::ALL.len())
        });
    }

    let gate = match (
        label_accuracy(&accuracy, Condition::Full.id()),
        label_accuracy(&accuracy, Condition::Cot.id()),
    ) {
        (Some(full), Some(cot)) => {
            let g = label_accuracy(&accuracy, GATE_LABEL);
            let c = label_accuracy(&accuracy, GATE_CRITIC_LABEL);
            match (g, c) {
                (None, None) => None,
                _ => {
                    let best_g = g.unwrap_or(full);
                    let best_c = c.unwrap_or(full);
                    Some(GateComparison {
                        full,
                        gate: g,
                        critic: c,
                        cot,
                        closure: gap_closure(full, best_g, best_c, cot).ok(),
                    })
                }
            }
        }
        _ => None,
    };

    Ok(ReportBundle {
        metadata,
        accuracy,
        deltas,
        deltas_by_variant,
        attribution,
        cross_tab,
        overlap,
        failure_distributions,
        gate,
    })
}

fn display_label(label: &str) -> String {
    match label.parse::<Condition>() {
        Ok(c) => c.display_name().to_string(),
        Err(_) => match label {
            GATE_LABEL => "G-STEP".into(),
            GATE_CRITIC_LABEL => "G-STEP+CRITIC".into(),
            other => other.into(),
        },
    }
}

fn variant_name(v: Option<Variant>) -> &'static str {
    v.map(Variant::as_str).unwrap_or("Overall")
}

impl ReportBundle {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text tables, half-up rounded.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let m = &self.metadata;
        let _ = writeln!(
            out,
            "task={} model={} matcher={} seed={} temperature={} max_turns={}",
            m.task.as_deref().unwrap_or("-"),
            m.model.as_deref().unwrap_or("-"),
            m.matcher.as_deref().unwrap_or("-"),
            m.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            m.temperature.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
            m.max_turns.map(|t| t.to_string()).unwrap_or_else(|| "-".into()),
        );

        let _ = writeln!(out, "\nAccuracy by condition and variant");
        let _ = writeln!(
            out,
            "{:<18} {:<8} {:>5} {:>8} {:>6} {:>6}",
            "Condition", "Variant", "N", "Acc", "EvF1", "Calls"
        );
        for c in &self.accuracy {
            let _ = writeln!(
                out,
                "{:<18} {:<8} {:>5} {:>8} {:>6.3} {:>6.2}",
                display_label(&c.label),
                variant_name(c.variant),
                c.n,
                c.accuracy.round(2),
                c.evidence_f1,
                c.avg_tool_calls
            );
        }

        if let Some(d) = &self.deltas {
            let _ = writeln!(out, "\nGap decomposition (%)");
            let _ = writeln!(
                out,
                "{:<8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>7}",
                "Variant", "d_cmp", "d_frc", "d_sty", "Net", "d_oracle", "d_context", "d_turn"
            );
            let mut rows: Vec<(Option<Variant>, &DeltaReport)> =
                self.deltas_by_variant.iter().map(|(v, d)| (Some(*v), d)).collect();
            rows.sort_by_key(|(v, _)| Variant::REPORT_ORDER.iter().position(|x| Some(*x) == *v));
            rows.push((None, d));
            for (v, d) in rows {
                let opt = |p: Option<Percent>| p.map(|x| x.signed(1)).unwrap_or_else(|| "---".into());
                let _ = writeln!(
                    out,
                    "{:<8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>7}",
                    variant_name(v),
                    d.d_cmp.signed(2),
                    d.d_frc.signed(2),
                    d.d_sty.signed(2),
                    d.net.signed(2),
                    opt(d.d_oracle),
                    opt(d.d_context),
                    opt(d.d_turn)
                );
            }
        }

        if let Some(a) = &self.attribution {
            let _ = writeln!(out, "\nSample-level attribution (%)");
            let _ = writeln!(out, "{:>6} {:>6} {:>6} {:>6} {:>6} {:>6}", "N_w", "Gen.", "sty-", "frc-", "cmp-", "Proto.");
            let pct = |c: AttributionCategory| a.percent.get(&c).map(|p| p.round(1)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                a.n_wrong,
                pct(AttributionCategory::Genuine),
                pct(AttributionCategory::StyLoss),
                pct(AttributionCategory::FrcLoss),
                pct(AttributionCategory::CmpLoss),
                a.proto.round(1)
            );
        }

        if !self.cross_tab.is_empty() {
            let _ = writeln!(out, "\nFailure type x attribution (row %)");
            let _ = writeln!(
                out,
                "{:<24} {:>5} {:>6} {:>6} {:>6} {:>6}",
                "Type", "N", "Gen.", "sty-", "frc-", "cmp-"
            );
            for r in &self.cross_tab {
                let pct = |c: AttributionCategory| r.percent.get(&c).map(|p| p.round(1)).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{:<24} {:>5} {:>6} {:>6} {:>6} {:>6}",
                    format!("{} {}", r.failure_type, r.failure_type.description()),
                    r.n,
                    pct(AttributionCategory::Genuine),
                    pct(AttributionCategory::StyLoss),
                    pct(AttributionCategory::FrcLoss),
                    pct(AttributionCategory::CmpLoss)
                );
            }
        }

        if let Some(o) = &self.overlap {
            let _ = writeln!(out, "\nCapability overlap");
            let _ = writeln!(
                out,
                "TB={} CoT={} Ovlp.={}",
                o.tb_count,
                o.cot_solved_count,
                o.ratio.map(|r| r.round(1)).unwrap_or_else(|| "---".into())
            );
        }

        if !self.failure_distributions.is_empty() {
            let _ = writeln!(out, "\nFailure type distribution (%)");
            let _ = write!(out, "{:<4}", "Type");
            for d in &self.failure_distributions {
                let _ = write!(out, " {:>18}", display_label(&d.condition));
            }
            out.push('\n');
            for t in FailureType::ALL {
                let _ = write!(out, "{:<4}", t.to_string());
                for d in &self.failure_distributions {
                    let _ = write!(out, " {:>18}", d.percent.get(&t).map(|p| p.round(1)).unwrap_or_default());
                }
                out.push('\n');
            }
        }

        if let Some(g) = &self.gate {
            let opt = |p: Option<Percent>| p.map(|x| x.round(2)).unwrap_or_else(|| "---".into());
            let _ = writeln!(out, "\nGate comparison");
            let _ = writeln!(
                out,
                "{:>7} {:>7} {:>8} {:>7} {:>7} {:>7}",
                "Full", "Gate", "+CRITIC", "CoT", "Gap", "Cls."
            );
            let _ = writeln!(
                out,
                "{:>7} {:>7} {:>8} {:>7} {:>7} {:>7}",
                g.full.round(2),
                opt(g.gate),
                opt(g.critic),
                g.cot.round(2),
                (g.full - g.cot).round(2),
                closure_cell(g.closure.as_ref())
            );
        }
        out
    }

    /// CSV mirrors of the tables, keyed by file stem.
    pub fn csv_tables(&self) -> BTreeMap<String, String> {
        let mut t = BTreeMap::new();
        let mut acc = String::from("condition,variant,n,correct,accuracy,evidence_f1,avg_tool_calls\n");
        for c in &self.accuracy {
            let _ = writeln!(
                acc,
                "{},{},{},{},{},{},{}",
                c.label,
                variant_name(c.variant),
                c.n,
                c.correct,
                c.accuracy.to_f64(),
                c.evidence_f1,
                c.avg_tool_calls
            );
        }
        t.insert("accuracy".into(), acc);

        let mut deltas = String::from("variant,d_cmp,d_frc,d_sty,net,d_oracle,d_context,d_turn,identity_residual\n");
        let opt = |p: Option<Percent>| p.map(|x| x.to_f64().to_string()).unwrap_or_default();
        let mut rows: Vec<(Option<Variant>, &DeltaReport)> =
            self.deltas_by_variant.iter().map(|(v, d)| (Some(*v), d)).collect();
        rows.extend(self.deltas.iter().map(|d| (None, d)));
        for (v, d) in rows {
            let _ = writeln!(
                deltas,
                "{},{},{},{},{},{},{},{},{}",
                variant_name(v),
                d.d_cmp.to_f64(),
                d.d_frc.to_f64(),
                d.d_sty.to_f64(),
                d.net.to_f64(),
                opt(d.d_oracle),
                opt(d.d_context),
                opt(d.d_turn),
                d.identity_residual
            );
        }
        t.insert("deltas".into(), deltas);

        let mut attr = String::from("category,count,percent\n");
        if let Some(a) = &self.attribution {
            for c in AttributionCategory::ALL {
                let _ = writeln!(
                    attr,
                    "{c:?},{},{}",
                    a.counts.get(&c).copied().unwrap_or(0),
                    a.percent.get(&c).map(|p| p.to_f64()).unwrap_or(0.0)
                );
            }
        }
        t.insert("attribution".into(), attr);

        let mut cross = String::from("type,n,genuine,sty,frc,cmp\n");
        for r in &self.cross_tab {
            let p = |c: AttributionCategory| r.percent.get(&c).map(|x| x.to_f64()).unwrap_or(0.0);
            let _ = writeln!(
                cross,
                "{},{},{},{},{},{}",
                r.failure_type,
                r.n,
                p(AttributionCategory::Genuine),
                p(AttributionCategory::StyLoss),
                p(AttributionCategory::FrcLoss),
                p(AttributionCategory::CmpLoss)
            );
        }
        t.insert("cross_tab".into(), cross);

        let mut ov = String::from("tool_benefited,cot_solved,ratio\n");
        if let Some(o) = &self.overlap {
            let _ = writeln!(
                ov,
                "{},{},{}",
                o.tb_count,
                o.cot_solved_count,
                o.ratio.map(|r| r.to_f64().to_string()).unwrap_or_default()
            );
        }
        t.insert("overlap".into(), ov);

        let mut dist = String::from("condition,type,count,percent\n");
        for d in &self.failure_distributions {
            for ft in FailureType::ALL {
                let _ = writeln!(
                    dist,
                    "{},{},{},{}",
                    d.condition,
                    ft,
                    d.counts.get(&ft).copied().unwrap_or(0),
                    d.percent.get(&ft).map(|p| p.to_f64()).unwrap_or(0.0)
                );
            }
        }
        t.insert("failure_types".into(), dist);

        let mut gate = String::from("full,gate,critic,cot,gap,closure\n");
        if let Some(g) = &self.gate {
            let _ = writeln!(
                gate,
                "{},{},{},{},{},{}",
                g.full.to_f64(),
                opt(g.gate),
                opt(g.critic),
                g.cot.to_f64(),
                (g.full - g.cot).to_f64(),
                g.closure.as_ref().map(|c| c.closure.to_f64().to_string()).unwrap_or_default()
            );
        }
        t.insert("gate".into(), gate);
        t
    }
}
