//! Printed table values and brute-force counting oracles for the
//! diagnostics layer.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolgap_core::corpus::{Task, Variant};
use toolgap_core::diagnostics::fixtures::{fixture_report, FixtureSet};
use toolgap_core::diagnostics::{
    attribute_results, attribution_report, capability_overlap, decompose_gap, gap_closure, AttributionCategory,
    OverlapReport, Percent,
};
use toolgap_core::harness::{Condition, ResultRow, ResultSet};

/// Printed decomposition rows: task, model, d_cmp, d_frc, d_sty, net.
pub const TABLE3: [(Task, &str, f64, f64, f64, f64); 6] = [
    (Task::Gsm8k, "4B", 21.44, -54.20, -0.60, -33.36),
    (Task::Gsm8k, "32B", 24.84, -27.64, -12.84, -15.64),
    (Task::Gsm8k, "GPT", 27.76, -37.92, -3.96, -14.12),
    (Task::HotpotQa, "4B", 15.63, -14.23, -3.87, -2.47),
    (Task::HotpotQa, "32B", 0.96, -1.91, -0.17, -1.12),
    (Task::HotpotQa, "GPT", 1.57, -0.78, -1.40, -0.62),
];

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol + 1e-9
}

/// Every printed decomposition row, reproduced from the bundled accuracies.
pub fn table3(tol: f64) -> Result<usize, String> {
    let report = fixture_report(&FixtureSet::bundled()).map_err(|e| e.to_string())?;
    for (task, short, cmp, frc, sty, net) in TABLE3 {
        let row = report
            .rows
            .iter()
            .find(|r| r.task == task && r.short == short)
            .ok_or_else(|| format!("{task}-{short} missing"))?;
        let d = &row.deltas;
        let got = [d.d_cmp, d.d_frc, d.d_sty, d.net].map(Percent::to_f64);
        for (g, w) in got.iter().zip([cmp, frc, sty, net]) {
            if !close(*g, w, tol) {
                return Err(format!("{task}-{short}: {got:?} vs printed {:?}", [cmp, frc, sty, net]));
            }
        }
    }
    Ok(TABLE3.len())
}

/// Oracle, context and turn probes of GSM8K-4B against the printed
/// one-decimal values.
pub fn table8_gsm4b(tol: f64) -> Result<[f64; 3], String> {
    let set = FixtureSet::bundled();
    let pair = set.find(Task::Gsm8k, "4B").ok_or("GSM8K-4B missing")?;
    let d = decompose_gap(&pair.accuracies().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let got = [d.d_oracle, d.d_context, d.d_turn].map(|p| p.map_or(f64::NAN, Percent::to_f64));
    for (g, w) in got.iter().zip([37.1, 0.4, 4.4]) {
        if !close(*g, w, tol) {
            return Err(format!("probes {got:?} vs printed [37.1, 0.4, 4.4]"));
        }
    }
    let rounded = [d.d_oracle, d.d_context, d.d_turn].map(|p| p.unwrap().signed(1));
    if rounded != ["+37.1", "+0.4", "+4.4"] {
        return Err(format!("rendered {rounded:?}"));
    }
    Ok(got)
}

fn random_percent(rng: &mut ChaCha8Rng) -> Percent {
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(1..=5000u64);
        Percent::from_counts(rng.gen_range(0..=n), n).unwrap()
    } else {
        Percent::parse(&format!("{}.{:02}", rng.gen_range(0..100), rng.gen_range(0..100))).unwrap()
    }
}

/// `net = d_sty + d_frc + d_cmp` with no residual at all.
pub fn identity(trials: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..trials {
        let acc: BTreeMap<Condition, Percent> = [Condition::Cot, Condition::FcStyle, Condition::Noop, Condition::Full]
            .into_iter()
            .map(|c| (c, random_percent(&mut rng)))
            .collect();
        let d = decompose_gap(&acc).map_err(|e| e.to_string())?;
        if d.net != d.d_sty + d.d_frc + d.d_cmp || d.identity_residual != 0.0 {
            return Err(format!("trial {i}: residual {}", d.identity_residual));
        }
        let float = d.net.to_f64() - (d.d_sty.to_f64() + d.d_frc.to_f64() + d.d_cmp.to_f64());
        if float.abs() > 1e-12 {
            return Err(format!("trial {i}: float residual {float}"));
        }
    }
    Ok(trials)
}

const CHAIN: [Condition; 4] = [Condition::Cot, Condition::FcStyle, Condition::Noop, Condition::Full];

/// Where along the chain a Full-incorrect sample first fails.
fn chain_oracle(outcomes: [bool; 4]) -> AttributionCategory {
    let first_wrong = outcomes.iter().position(|ok| !ok).expect("full is wrong");
    [
        AttributionCategory::Genuine,
        AttributionCategory::StyLoss,
        AttributionCategory::FrcLoss,
        AttributionCategory::CmpLoss,
    ][first_wrong]
}

fn row(q: &str, v: Variant, c: Condition, correct: bool) -> ResultRow {
    ResultRow {
        question_id: q.to_string(),
        variant: v,
        condition: c.id().to_string(),
        correct,
        evidence_f1: 1.0,
        tool_calls: 0,
        turns: 1,
    }
}

/// Random correctness tables: attribution must partition the
/// Full-incorrect set and agree with the chain oracle sample by sample.
pub fn attribution_partition(tables: usize, samples: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..tables {
        let mut rs = ResultSet::default();
        let mut truth: BTreeMap<(String, Variant), [bool; 4]> = BTreeMap::new();
        let bias: f64 = rng.gen_range(0.1..0.9);
        for i in 0..samples {
            let q = format!("q{i}");
            let v = Variant::REPORT_ORDER[rng.gen_range(0..5)];
            let outcomes = [(); 4].map(|_| rng.gen_bool(bias));
            for (c, ok) in CHAIN.iter().zip(outcomes) {
                rs.rows.push(row(&q, v, *c, ok));
            }
            truth.insert((q, v), outcomes);
        }
        let attrs = attribute_results(&rs);
        let wrong: BTreeSet<&(String, Variant)> = truth.iter().filter(|(_, o)| !o[3]).map(|(k, _)| k).collect();
        let keys: BTreeSet<&(String, Variant)> = attrs.keys().collect();
        if keys != wrong {
            return Err(format!("table {t}: attributed set differs from Full-incorrect set"));
        }
        for (k, cat) in &attrs {
            if *cat != chain_oracle(truth[k]) {
                return Err(format!("table {t}: {k:?} got {cat:?}"));
            }
        }
        let report = attribution_report(&attrs);
        if report.counts.values().sum::<usize>() != wrong.len() || report.n_wrong != wrong.len() {
            return Err(format!("table {t}: counts do not partition"));
        }
        if !wrong.is_empty() && report.percent[&AttributionCategory::Genuine] + report.proto != Percent::from_counts(1, 1).unwrap() {
            return Err(format!("table {t}: Gen + Proto != 100"));
        }
    }
    Ok(tables)
}

/// Category counts of the 4B GSM8K row reproduce the printed shares, and
/// the printed shares satisfy Proto = sty + frc + cmp, Gen + Proto = 100.
pub fn table4_rowsum() -> Result<String, String> {
    let (gen, sty, frc, cmp, n) = (247u64, 137u64, 703u64, 111u64, 1198u64);
    if gen + sty + frc + cmp != n {
        return Err("counts do not sum to N_w".into());
    }
    let pct = |k| Percent::from_counts(k, n).unwrap();
    let shares = [pct(gen), pct(sty), pct(frc), pct(cmp)].map(|p| p.round(1));
    if shares != ["20.6", "11.4", "58.7", "9.3"] {
        return Err(format!("shares {shares:?}"));
    }
    let proto = pct(sty) + pct(frc) + pct(cmp);
    if proto.round(1) != "79.4" || pct(gen) + proto != Percent::from_counts(1, 1).unwrap() {
        return Err(format!("proto {}", proto.round(2)));
    }
    let set = FixtureSet::bundled();
    let a = set
        .find(Task::Gsm8k, "4B")
        .and_then(|p| p.attribution.clone())
        .ok_or("fixture attribution missing")?;
    let printed = a.sty + a.frc + a.cmp;
    if printed != Percent::parse("79.4").unwrap() || a.genuine + printed != Percent::parse("100").unwrap() {
        return Err(format!("printed row sums to {}", printed.round(1)));
    }
    Ok(format!("{} + {} + {} = {}", a.sty.round(1), a.frc.round(1), a.cmp.round(1), printed.round(1)))
}

pub fn overlap_fixture(tol: f64) -> Result<f64, String> {
    let r = OverlapReport::from_counts(673, 603);
    let got = r.ratio.ok_or("no ratio")?.to_f64();
    if close(got, 89.6, tol) {
        Ok(got)
    } else {
        Err(format!("overlap {got}"))
    }
}

/// Random ResultSets (with some rows missing) against set arithmetic.
pub fn overlap_random(sets: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..sets {
        let mut rs = ResultSet::default();
        let mut full_ok = BTreeSet::new();
        let mut noop_wrong = BTreeSet::new();
        let mut cot_ok = BTreeSet::new();
        for i in 0..rng.gen_range(0..60) {
            let key = (format!("q{}", i / 2), Variant::REPORT_ORDER[i % 2]);
            for (c, set) in [
                (Condition::Full, &mut full_ok),
                (Condition::Noop, &mut noop_wrong),
                (Condition::Cot, &mut cot_ok),
            ] {
                if rng.gen_bool(0.1) {
                    continue;
                }
                let ok = rng.gen_bool(0.5);
                let member = if c == Condition::Noop { !ok } else { ok };
                if member {
                    set.insert(key.clone());
                }
                rs.rows.push(row(&key.0, key.1, c, ok));
            }
        }
        let tb: BTreeSet<_> = full_ok.intersection(&noop_wrong).cloned().collect();
        let both = tb.intersection(&cot_ok).count();
        let r = capability_overlap(&rs);
        if r.tb_count != tb.len() || r.cot_solved_count != both {
            return Err(format!("set {t}: ({}, {}) vs oracle ({}, {both})", r.tb_count, r.cot_solved_count, tb.len()));
        }
        let want = (!tb.is_empty()).then(|| 100.0 * both as f64 / tb.len() as f64);
        if r.ratio.map(Percent::to_f64).zip(want).is_some_and(|(a, b)| (a - b).abs() > 1e-9)
            || r.ratio.is_some() != want.is_some()
        {
            return Err(format!("set {t}: ratio {:?} vs {want:?}", r.ratio));
        }
    }
    Ok(sets)
}

pub fn closure_fixture(tol: f64) -> Result<f64, String> {
    let p = |s: &str| Percent::parse(s).unwrap();
    let c = gap_closure(p("50.64"), p("69.12"), p("74.88"), p("82.64")).map_err(|e| e.to_string())?;
    // (74.88 - 50.64) / (82.64 - 50.64) = 24.24 / 32
    let oracle = 24.24 / 32.0 * 100.0;
    let got = c.closure.to_f64();
    if close(got, 75.75, tol) && (got - oracle).abs() < 1e-9 && c.gap.round(2) == "-32.00" {
        Ok(got)
    } else {
        Err(format!("closure {got}, gap {}", c.gap.round(2)))
    }
}
