//! Metrics and analyses over result sets: accuracy and evidence F1, gap
//! decomposition with oracle and turn probes, sample-level attribution,
//! the A-F failure taxonomy, capability overlap and gap closure.

mod attribution;
mod decomposition;
pub mod fixtures;
mod percent;
pub mod report;

use std::collections::BTreeSet;

use thiserror::Error;

pub use attribution::{
    attribute_results, attribute_sample, attribution_report, capability_overlap, classify_facts, classify_failure,
    cross_tabulate, failure_distribution, AttributionCategory, AttributionReport, CrossTabRow, FailureDistribution,
    FailureFacts, FailureType, OverlapReport, SampleKey, EVIDENCE_DRIFT_F1,
};
pub use decomposition::{decompose_gap, gap_closure, DeltaReport, GapClosure};
pub use percent::Percent;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("missing required condition {0}")]
    MissingCondition(&'static str),
    #[error("gap closure undefined: CoT and Full accuracies are equal")]
    ZeroGap,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

/// Set F1 between predicted and gold evidence ids. Two empty sets agree
/// perfectly; one empty set scores zero.
pub fn evidence_f1(pred: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => {
            let hit = pred.intersection(gold).count() as f64;
            2.0 * hit / (pred.len() + gold.len()) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn f1_cases() {
        assert_eq!(evidence_f1(&ids(&[2]), &ids(&[2])), 1.0);
        assert!((evidence_f1(&ids(&[0, 2]), &ids(&[2])) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(evidence_f1(&ids(&[]), &ids(&[])), 1.0);
        assert_eq!(evidence_f1(&ids(&[]), &ids(&[1])), 0.0);
        assert_eq!(evidence_f1(&ids(&[3]), &ids(&[1])), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn spurious_ids_never_raise_f1(
            gold in proptest::collection::btree_set(0usize..20, 1..5),
            pred in proptest::collection::btree_set(0usize..20, 0..5),
            extra in 20usize..40,
        ) {
            let before = evidence_f1(&pred, &gold);
            let mut more = pred.clone();
            more.insert(extra);
            proptest::prop_assert!(evidence_f1(&more, &gold) <= before + 1e-12);
            proptest::prop_assert_eq!(evidence_f1(&gold, &gold), 1.0);
        }
    }
}
