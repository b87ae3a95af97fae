//! Additive decomposition of the CoT-to-agent accuracy gap, oracle and
//! turn probes, and gap closure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DiagnosticsError, Percent};
use crate::harness::Condition;

/// Signed accuracy deltas in percentage points.
///
/// `net = d_sty + d_frc + d_cmp` holds exactly because every term is a
/// difference of exact rationals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub d_sty: Percent,
    pub d_frc: Percent,
    pub d_cmp: Percent,
    pub net: Percent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_oracle: Option<Percent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_context: Option<Percent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_turn: Option<Percent>,
    pub identity_residual: f64,
}

/// Decomposes the gap from per-condition accuracies. CoT, FCStyle,
/// NoopTool and Full are required; the oracle and turn probes are filled
/// in when their conditions are present.
pub fn decompose_gap(acc: &BTreeMap<Condition, Percent>) -> Result<DeltaReport, DiagnosticsError> {
    let get = |c: Condition| {
        acc.get(&c)
            .copied()
            .ok_or(DiagnosticsError::MissingCondition(c.display_name()))
    };
    let cot = get(Condition::Cot)?;
    let fcstyle = get(Condition::FcStyle)?;
    let noop = get(Condition::Noop)?;
    let full = get(Condition::Full)?;
    let d_sty = fcstyle - cot;
    let d_frc = noop - fcstyle;
    let d_cmp = full - noop;
    let net = full - cot;
    let residual = net - (d_cmp + d_frc + d_sty);
    Ok(DeltaReport {
        d_sty,
        d_frc,
        d_cmp,
        net,
        d_oracle: acc.get(&Condition::OracleCalc).map(|&o| o - full),
        d_context: acc.get(&Condition::OracleEvid).map(|&e| e - full),
        d_turn: acc.get(&Condition::Max1).map(|&m| full - m),
        identity_residual: residual.to_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapClosure {
    /// Full minus CoT.
    pub gap: Percent,
    /// Share of the gap recovered by the better gated arm, in percent.
    pub closure: Percent,
}

pub fn gap_closure(full: Percent, gated: Percent, critic: Percent, cot: Percent) -> Result<GapClosure, DiagnosticsError> {
    let best = gated.max(critic);
    let closure = (best - full).percent_of(cot - full).ok_or(DiagnosticsError::ZeroGap)?;
    Ok(GapClosure {
        gap: full - cot,
        closure,
    })
}
