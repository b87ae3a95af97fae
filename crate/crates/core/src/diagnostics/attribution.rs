//! Sample-level attribution along the degradation chain, the A-F failure
//! taxonomy, their cross-tabulation, and capability overlap.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, Percent};
use crate::corpus::Variant;
use crate::harness::{Condition, Matcher, ResultSet, Trajectory};

/// Earliest stage of CoT → FCStyle → NoopTool → Full at which an
/// incorrect Full sample is already wrong.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttributionCategory {
    Genuine,
    StyLoss,
    FrcLoss,
    CmpLoss,
}

impl AttributionCategory {
    pub const ALL: [AttributionCategory; 4] = [
        AttributionCategory::Genuine,
        AttributionCategory::StyLoss,
        AttributionCategory::FrcLoss,
        AttributionCategory::CmpLoss,
    ];

    pub fn short(self) -> &'static str {
        match self {
            AttributionCategory::Genuine => "Gen.",
            AttributionCategory::StyLoss => "d_sty-",
            AttributionCategory::FrcLoss => "d_frc-",
            AttributionCategory::CmpLoss => "d_cmp-",
        }
    }
}

pub fn attribute_sample(cot: bool, fcstyle: bool, noop: bool, full: bool) -> Result<AttributionCategory, DiagnosticsError> {
    if full {
        return Err(DiagnosticsError::Precondition("only incorrect Agent-Full samples are attributed".into()));
    }
    Ok(if !cot {
        AttributionCategory::Genuine
    } else if !fcstyle {
        AttributionCategory::StyLoss
    } else if !noop {
        AttributionCategory::FrcLoss
    } else {
        AttributionCategory::CmpLoss
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureType {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl FailureType {
    pub const ALL: [FailureType; 6] = [
        FailureType::A,
        FailureType::B,
        FailureType::C,
        FailureType::D,
        FailureType::E,
        FailureType::F,
    ];

    pub fn description(self) -> &'static str {
        match self {
            FailureType::A => "Under-computation",
            FailureType::B => "Tool error",
            FailureType::C => "Evidence drift",
            FailureType::D => "Integration failure",
            FailureType::E => "No tool output",
            FailureType::F => "Planning mismatch",
        }
    }
}

impl fmt::Display for FailureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Evidence-F1 below this marks evidence drift (Type C).
pub const EVIDENCE_DRIFT_F1: f64 = 0.5;

/// Observable facts of a failed trajectory used by the taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureFacts {
    pub successful_calls: usize,
    pub any_failed_call: bool,
    pub evidence_f1: f64,
    /// Output of the last call that succeeded, if any.
    pub last_success_output: Option<String>,
    pub prediction: String,
}

impl FailureFacts {
    pub fn from_trajectory(traj: &Trajectory, evidence_f1: f64) -> Self {
        Self {
            successful_calls: traj.successful_calls(),
            any_failed_call: traj.tool_calls.iter().any(|x| !x.result.ok),
            evidence_f1,
            last_success_output: traj
                .tool_calls
                .iter()
                .rev()
                .find(|x| x.result.is_success())
                .map(|x| x.result.output.clone()),
            prediction: traj.prediction.final_answer.clone(),
        }
    }
}

/// Assigns the first matching type in the fixed order A, B, C, D, E, F.
/// `required_steps` defaults to 1 when the sample has no step count.
pub fn classify_facts(facts: &FailureFacts, gold_answer: &str, required_steps: Option<u32>) -> FailureType {
    let required = required_steps.unwrap_or(1) as usize;
    if facts.successful_calls < required {
        FailureType::A
    } else if facts.any_failed_call {
        FailureType::B
    } else if facts.evidence_f1 < EVIDENCE_DRIFT_F1 {
        FailureType::C
    } else if facts
        .last_success_output
        .as_deref()
        .is_some_and(|out| Matcher::Exact.is_correct(out, gold_answer))
        && !Matcher::Exact.is_correct(&facts.prediction, gold_answer)
    {
        FailureType::D
    } else if facts.successful_calls == 0 {
        FailureType::E
    } else {
        FailureType::F
    }
}

/// Classifies an incorrect agent trajectory.
pub fn classify_failure(
    traj: &Trajectory,
    correct: bool,
    evidence_f1: f64,
    gold_answer: &str,
    gold_step_count: Option<u32>,
) -> Result<FailureType, DiagnosticsError> {
    if correct {
        return Err(DiagnosticsError::Precondition("only incorrect trajectories are classified".into()));
    }
    if !traj.condition.uses_tools() {
        return Err(DiagnosticsError::Precondition(format!(
            "{} is not an agent condition",
            traj.condition.display_name()
        )));
    }
    Ok(classify_facts(
        &FailureFacts::from_trajectory(traj, evidence_f1),
        gold_answer,
        gold_step_count,
    ))
}

pub type SampleKey = (String, Variant);

/// Attribution of every incorrect Full sample that also has CoT, FCStyle
/// and NoopTool results.
pub fn attribute_results(results: &ResultSet) -> BTreeMap<SampleKey, AttributionCategory> {
    let index = results.index();
    let mut out = BTreeMap::new();
    for full in results.rows_for(Condition::Full.id()).filter(|r| !r.correct) {
        let lookup = |c: Condition| index.get(&(full.question_id.as_str(), full.variant, c.id())).map(|r| r.correct);
        match (lookup(Condition::Cot), lookup(Condition::FcStyle), lookup(Condition::Noop)) {
            (Some(cot), Some(fc), Some(noop)) => {
                let cat = attribute_sample(cot, fc, noop, false).expect("full is incorrect");
                out.insert((full.question_id.clone(), full.variant), cat);
            }
            _ => log::warn!(
                "{}/{}: missing chain conditions, not attributed",
                full.question_id,
                full.variant
            ),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    /// Number of incorrect Full samples attributed.
    pub n_wrong: usize,
    pub counts: BTreeMap<AttributionCategory, usize>,
    pub percent: BTreeMap<AttributionCategory, Percent>,
    /// StyLoss + FrcLoss + CmpLoss.
    pub proto: Percent,
}

pub fn attribution_report(attrs: &BTreeMap<SampleKey, AttributionCategory>) -> AttributionReport {
    let n = attrs.len();
    let counts: BTreeMap<AttributionCategory, usize> = AttributionCategory::ALL
        .into_iter()
        .map(|c| (c, attrs.values().filter(|&&v| v == c).count()))
        .collect();
    let percent: BTreeMap<AttributionCategory, Percent> = counts
        .iter()
        .map(|(&c, &k)| (c, Percent::from_counts(k as u64, n as u64).unwrap_or_default()))
        .collect();
    let proto = percent
        .iter()
        .filter(|(c, _)| **c != AttributionCategory::Genuine)
        .map(|(_, p)| *p)
        .sum();
    AttributionReport {
        n_wrong: n,
        counts,
        percent,
        proto,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTabRow {
    pub failure_type: FailureType,
    pub n: usize,
    pub counts: BTreeMap<AttributionCategory, usize>,
    /// Row percentages; they sum to exactly 100 before rounding.
    pub percent: BTreeMap<AttributionCategory, Percent>,
}

/// Row-percentage table of failure type × attribution. Only keys present
/// in both maps are counted; rows appear only for types that occur.
pub fn cross_tabulate(
    attrs: &BTreeMap<SampleKey, AttributionCategory>,
    types: &BTreeMap<SampleKey, FailureType>,
) -> Vec<CrossTabRow> {
    let mut rows = Vec::new();
    for t in FailureType::ALL {
        let members: Vec<AttributionCategory> = types
            .iter()
            .filter(|(_, &ft)| ft == t)
            .filter_map(|(k, _)| attrs.get(k).copied())
            .collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        let counts: BTreeMap<AttributionCategory, usize> = AttributionCategory::ALL
            .into_iter()
            .map(|c| (c, members.iter().filter(|&&m| m == c).count()))
            .collect();
        let percent = counts
            .iter()
            .map(|(&c, &k)| (c, Percent::from_counts(k as u64, n as u64).expect("n > 0")))
            .collect();
        rows.push(CrossTabRow {
            failure_type: t,
            n,
            counts,
            percent,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// Samples with Full correct and NoopTool wrong.
    pub tb_count: usize,
    /// The subset of those also solved by CoT.
    pub cot_solved_count: usize,
    /// Absent when no sample is tool-benefited.
    pub ratio: Option<Percent>,
}

impl OverlapReport {
    pub fn from_counts(tb_count: usize, cot_solved_count: usize) -> Self {
        Self {
            tb_count,
            cot_solved_count,
            ratio: Percent::from_counts(cot_solved_count as u64, tb_count as u64),
        }
    }
}

pub fn capability_overlap(results: &ResultSet) -> OverlapReport {
    let index = results.index();
    let mut tb = 0;
    let mut cot = 0;
    for full in results.rows_for(Condition::Full.id()).filter(|r| r.correct) {
        let key = |c: Condition| (full.question_id.as_str(), full.variant, c.id());
        let Some(noop) = index.get(&key(Condition::Noop)) else {
            continue;
        };
        if noop.correct {
            continue;
        }
        tb += 1;
        if index.get(&key(Condition::Cot)).is_some_and(|r| r.correct) {
            cot += 1;
        }
    }
    OverlapReport::from_counts(tb, cot)
}

/// Share of each failure type among classified trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDistribution {
    pub condition: String,
    pub n: usize,
    pub counts: BTreeMap<FailureType, usize>,
    pub percent: BTreeMap<FailureType, Percent>,
}

pub fn failure_distribution(label: &str, types: &BTreeMap<SampleKey, FailureType>) -> FailureDistribution {
    let n = types.len();
    let counts: BTreeMap<FailureType, usize> = FailureType::ALL
        .into_iter()
        .map(|t| (t, types.values().filter(|&&v| v == t).count()))
        .collect();
    let percent = counts
        .iter()
        .map(|(&t, &k)| (t, Percent::from_counts(k as u64, n as u64).unwrap_or_default()))
        .collect();
    FailureDistribution {
        condition: label.to_string(),
        n,
        counts,
        percent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ResultRow;

    fn facts(ok: usize, failed: bool, f1: f64, last: Option<&str>, pred: &str) -> FailureFacts {
        FailureFacts {
            successful_calls: ok,
            any_failed_call: failed,
            evidence_f1: f1,
            last_success_output: last.map(str::to_string),
            prediction: pred.to_string(),
        }
    }

    #[test]
    fn attribution_chain() {
        assert_eq!(attribute_sample(false, true, true, false).unwrap(), AttributionCategory::Genuine);
        assert_eq!(attribute_sample(true, false, true, false).unwrap(), AttributionCategory::StyLoss);
        assert_eq!(attribute_sample(true, true, false, false).unwrap(), AttributionCategory::FrcLoss);
        assert_eq!(attribute_sample(true, true, true, false).unwrap(), AttributionCategory::CmpLoss);
        assert!(attribute_sample(true, true, true, true).is_err());
    }

    #[test]
    fn taxonomy_priority() {
        assert_eq!(classify_facts(&facts(1, false, 1.0, Some("24"), "24"), "72", Some(2)), FailureType::A);
        // Two successful calls plus an earlier div_zero: A does not apply, B does.
        assert_eq!(classify_facts(&facts(2, true, 1.0, Some("72"), "24"), "72", Some(2)), FailureType::B);
        assert_eq!(classify_facts(&facts(2, false, 0.3, Some("72"), "24"), "72", Some(2)), FailureType::C);
        assert_eq!(classify_facts(&facts(2, false, 1.0, Some("72"), "24"), "72", Some(2)), FailureType::D);
        assert_eq!(classify_facts(&facts(0, false, 1.0, None, "5"), "72", Some(0)), FailureType::E);
        assert_eq!(classify_facts(&facts(2, false, 1.0, Some("12"), "12"), "10", Some(2)), FailureType::F);
        // Default requirement is one successful step.
        assert_eq!(classify_facts(&facts(0, false, 1.0, None, "5"), "72", None), FailureType::A);
    }

    fn row(q: &str, cond: Condition, correct: bool) -> ResultRow {
        ResultRow {
            question_id: q.into(),
            variant: Variant::Base,
            condition: cond.id().into(),
            correct,
            evidence_f1: 1.0,
            tool_calls: 0,
            turns: 1,
        }
    }

    #[test]
    fn overlap_membership() {
        // (Full, Noop, CoT) = (1,0,1), (1,0,0), (1,1,1), (0,0,1)
        let table = [(true, false, true), (true, false, false), (true, true, true), (false, false, true)];
        let mut rs = ResultSet::default();
        for (i, (full, noop, cot)) in table.into_iter().enumerate() {
            let q = format!("q{i}");
            rs.rows.push(row(&q, Condition::Full, full));
            rs.rows.push(row(&q, Condition::Noop, noop));
            rs.rows.push(row(&q, Condition::Cot, cot));
        }
        let o = capability_overlap(&rs);
        assert_eq!((o.tb_count, o.cot_solved_count), (2, 1));
        assert_eq!(o.ratio, Percent::from_counts(1, 2));
        assert_eq!(capability_overlap(&ResultSet::default()).ratio, None);
    }

    #[test]
    fn cross_tab_rows() {
        let mut attrs = BTreeMap::new();
        let mut types = BTreeMap::new();
        let split = [(2, AttributionCategory::Genuine), (1, AttributionCategory::StyLoss), (6, AttributionCategory::FrcLoss), (1, AttributionCategory::CmpLoss)];
        let mut i = 0;
        for (k, cat) in split {
            for _ in 0..k {
                let key = (format!("q{i}"), Variant::Base);
                attrs.insert(key.clone(), cat);
                types.insert(key, FailureType::A);
                i += 1;
            }
        }
        let rows = cross_tabulate(&attrs, &types);
        assert_eq!(rows.len(), 1);
        let got: Vec<String> = rows[0].percent.values().map(|p| p.round(0)).collect();
        assert_eq!(got, ["20", "10", "60", "10"]);
        assert!(cross_tabulate(&BTreeMap::new(), &BTreeMap::new()).is_empty());
    }
}
