//! Published aggregate numbers bundled as a fixture, and the tables that
//! are computed from them (decomposition, probes, attribution row sums,
//! overlap, gate closure).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{decompose_gap, gap_closure, DeltaReport, DiagnosticsError, GapClosure, OverlapReport, Percent};
use crate::corpus::Task;
use crate::harness::{Condition, Matcher};

pub const TABLE2_JSON: &str = include_str!("../../fixtures/table2.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureAttribution {
    pub n_wrong: usize,
    pub genuine: Percent,
    pub sty: Percent,
    pub frc: Percent,
    pub cmp: Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureOverlap {
    pub tool_benefited: usize,
    pub cot_solved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureGate {
    pub full: Percent,
    pub gate: Percent,
    pub critic: Percent,
    pub cot: Percent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePair {
    pub task: Task,
    pub model: String,
    pub short: String,
    pub matcher: Matcher,
    /// Keyed by condition id.
    pub accuracy: BTreeMap<String, Percent>,
    #[serde(default)]
    pub attribution: Option<FixtureAttribution>,
    #[serde(default)]
    pub overlap: Option<FixtureOverlap>,
    #[serde(default)]
    pub gate: Option<FixtureGate>,
}

impl FixturePair {
    pub fn name(&self) -> String {
        format!("{}-{}", self.task, self.short)
    }

    pub fn accuracies(&self) -> Result<BTreeMap<Condition, Percent>, DiagnosticsError> {
        self.accuracy
            .iter()
            .map(|(k, v)| {
                k.parse::<Condition>()
                    .map(|c| (c, *v))
                    .map_err(|e| DiagnosticsError::Fixture(format!("{}: {e}", self.name())))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSet {
    pub pairs: Vec<FixturePair>,
}

impl FixtureSet {
    pub fn bundled() -> Self {
        Self::from_json(TABLE2_JSON).expect("bundled fixture parses")
    }

    pub fn from_json(text: &str) -> Result<Self, DiagnosticsError> {
        serde_json::from_str(text).map_err(|e| DiagnosticsError::Fixture(e.to_string()))
    }

    pub fn find(&self, task: Task, short: &str) -> Option<&FixturePair> {
        self.pairs.iter().find(|p| p.task == task && p.short == short)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub task: Task,
    pub model: String,
    pub short: String,
    pub deltas: DeltaReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proto: Option<Percent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<FixtureGate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<GapClosure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureReport {
    pub rows: Vec<FixtureRow>,
    #[serde(skip)]
    source: Vec<FixturePair>,
}

pub fn fixture_report(set: &FixtureSet) -> Result<FixtureReport, DiagnosticsError> {
    let mut rows = Vec::new();
    for pair in &set.pairs {
        let deltas = decompose_gap(&pair.accuracies()?)?;
        let closure = match &pair.gate {
            Some(g) => match gap_closure(g.full, g.gate, g.critic, g.cot) {
                Ok(c) => Some(c),
                Err(DiagnosticsError::ZeroGap) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        rows.push(FixtureRow {
            task: pair.task,
            model: pair.model.clone(),
            short: pair.short.clone(),
            deltas,
            proto: pair.attribution.as_ref().map(|a| a.sty + a.frc + a.cmp),
            overlap: pair
                .overlap
                .as_ref()
                .map(|o| OverlapReport::from_counts(o.tool_benefited, o.cot_solved)),
            gate: pair.gate.clone(),
            closure,
        });
    }
    Ok(FixtureReport {
        rows,
        source: set.pairs.clone(),
    })
}

fn pm(p: Option<Percent>, decimals: u32) -> String {
    p.map(|v| v.signed(decimals)).unwrap_or_else(|| "---".into())
}

/// Closure cell: the raw value is kept in JSON, but a best arm below Full
/// (negative closure) renders as "---".
pub fn closure_cell(c: Option<&GapClosure>) -> String {
    match c {
        Some(c) if c.closure >= Percent::zero() => c.closure.round(2),
        _ => "---".into(),
    }
}

impl FixtureReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Overall accuracy (%)");
        let _ = write!(out, "{:<18}", "Condition");
        for p in &self.source {
            let _ = write!(out, " {:>12}", p.name());
        }
        out.push('\n');
        for c in Condition::ALL {
            let _ = write!(out, "{:<18}", c.display_name());
            for p in &self.source {
                let cell = p.accuracy.get(c.id()).map(|v| v.round(2)).unwrap_or_else(|| "---".into());
                let _ = write!(out, " {cell:>12}");
            }
            out.push('\n');
        }

        let _ = writeln!(out, "\nGap decomposition (%)");
        let _ = writeln!(out, "{:<10} {:<6} {:>8} {:>8} {:>8} {:>8}", "Task", "Model", "d_cmp", "d_frc", "d_sty", "Net");
        for r in &self.rows {
            let d = &r.deltas;
            let _ = writeln!(
                out,
                "{:<10} {:<6} {:>8} {:>8} {:>8} {:>8}",
                r.task.to_string(),
                r.short,
                d.d_cmp.signed(2),
                d.d_frc.signed(2),
                d.d_sty.signed(2),
                d.net.signed(2)
            );
        }

        if self.source.iter().any(|p| p.attribution.is_some()) {
            let _ = writeln!(out, "\nSample-level attribution (%)");
            let _ = writeln!(
                out,
                "{:<10} {:<6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                "Task", "Model", "N_w", "Gen.", "sty-", "frc-", "cmp-", "Proto."
            );
            for (p, r) in self.source.iter().zip(&self.rows) {
                if let (Some(a), Some(proto)) = (&p.attribution, r.proto) {
                    let _ = writeln!(
                        out,
                        "{:<10} {:<6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
                        p.task.to_string(),
                        p.short,
                        a.n_wrong,
                        a.genuine.round(1),
                        a.sty.round(1),
                        a.frc.round(1),
                        a.cmp.round(1),
                        proto.round(1)
                    );
                }
            }
        }

        if self.rows.iter().any(|r| r.overlap.is_some()) {
            let _ = writeln!(out, "\nCapability overlap");
            let _ = writeln!(out, "{:<10} {:<6} {:>6} {:>6} {:>9}", "Task", "Model", "TB", "CoT", "Ovlp.(%)");
            for r in &self.rows {
                if let Some(o) = &r.overlap {
                    let ratio = o.ratio.map(|v| v.round(1)).unwrap_or_else(|| "---".into());
                    let _ = writeln!(
                        out,
                        "{:<10} {:<6} {:>6} {:>6} {:>9}",
                        r.task.to_string(),
                        r.short,
                        o.tb_count,
                        o.cot_solved_count,
                        ratio
                    );
                }
            }
        }

        if self.rows.iter().any(|r| r.gate.is_some()) {
            let _ = writeln!(out, "\nGate effectiveness");
            let _ = writeln!(
                out,
                "{:<14} {:>7} {:>7} {:>8} {:>7} {:>7} {:>7}",
                "Config", "Full", "Gate", "+CRITIC", "CoT", "Gap", "Cls."
            );
            for r in &self.rows {
                if let Some(g) = &r.gate {
                    let gap = g.full - g.cot;
                    let _ = writeln!(
                        out,
                        "{:<14} {:>7} {:>7} {:>8} {:>7} {:>7} {:>7}",
                        r.name(),
                        g.full.round(2),
                        g.gate.round(2),
                        g.critic.round(2),
                        g.cot.round(2),
                        gap.round(2),
                        closure_cell(r.closure.as_ref())
                    );
                }
            }
        }

        let _ = writeln!(out, "\nOracle and turn probes (%)");
        let _ = writeln!(out, "{:<10} {:<6} {:>9} {:>9} {:>7}", "Task", "Model", "d_oracle", "d_context", "d_turn");
        for r in &self.rows {
            let d = &r.deltas;
            let _ = writeln!(
                out,
                "{:<10} {:<6} {:>9} {:>9} {:>7}",
                r.task.to_string(),
                r.short,
                pm(d.d_oracle, 1),
                pm(d.d_context, 1),
                pm(d.d_turn, 1)
            );
        }
        out
    }

    /// One CSV per table, keyed by file stem.
    pub fn csv_tables(&self) -> BTreeMap<String, String> {
        let mut tables = BTreeMap::new();
        let mut deltas = String::from("task,model,d_cmp,d_frc,d_sty,net,d_oracle,d_context,d_turn,identity_residual\n");
        for r in &self.rows {
            let d = &r.deltas;
            let opt = |p: Option<Percent>| p.map(|v| v.to_f64().to_string()).unwrap_or_default();
            let _ = writeln!(
                deltas,
                "{},{},{},{},{},{},{},{},{},{}",
                r.task,
                r.short,
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
        tables.insert("deltas".into(), deltas);
        let mut gate = String::from("task,model,full,gate,critic,cot,gap,closure\n");
        for r in &self.rows {
            if let (Some(g), c) = (&r.gate, &r.closure) {
                let _ = writeln!(
                    gate,
                    "{},{},{},{},{},{},{},{}",
                    r.task,
                    r.short,
                    g.full.to_f64(),
                    g.gate.to_f64(),
                    g.critic.to_f64(),
                    g.cot.to_f64(),
                    (g.full - g.cot).to_f64(),
                    c.as_ref().map(|c| c.closure.to_f64().to_string()).unwrap_or_default()
                );
            }
        }
        tables.insert("gate".into(), gate);
        tables
    }
}

impl FixtureRow {
    pub fn name(&self) -> String {
        let task = match self.task {
            Task::Gsm8k => "GSM",
            Task::HotpotQa => "Hot",
        };
        format!("{task}-{}", self.short)
    }
}
