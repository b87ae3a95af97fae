//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails at
//! the end if any criterion failed.
//!
//! Tolerances are pinned here: decomposition ±0.01, probe rows ±0.05,
//! overlap ±0.05, gap closure ±0.01, gradient relative error < 1e-4,
//! separable training accuracy ≥ 0.95.

#[allow(dead_code)]
#[path = "../../core/tests/oracles/calc.rs"]
mod calc;
#[allow(dead_code)]
#[path = "../../core/tests/oracles/counting.rs"]
mod counting;
#[allow(dead_code)]
#[path = "../../core/tests/oracles/gate_runs.rs"]
mod gate_runs;
#[allow(dead_code)]
#[path = "../../core/tests/oracles/golden.rs"]
mod golden;
#[allow(dead_code)]
#[path = "../../core/tests/oracles/nn.rs"]
mod nn;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolgap_core::corpus::toy_corpus;
use toolgap_core::gate::{self, group_kfold, predict_continue, TrainConfig, FEATURE_DIM};
use toolgap_core::harness::GateAction;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    match (out, limit) {
        (Ok(_), Some(l)) if took >= l => Err(format!("took {took:.2?}, limit {l:?}")),
        (Ok(msg), _) => Ok(format!("{msg} ({took:.2?})")),
        (Err(e), _) => Err(e),
    }
}

fn decomposition() -> Outcome {
    counting::table3(0.01).map(|n| format!("{n} rows within ±0.01"))
}

fn probes() -> Outcome {
    counting::table8_gsm4b(0.05).map(|g| format!("oracle/context/turn = {:.2}/{:.2}/{:.2}", g[0], g[1], g[2]))
}

fn identity() -> Outcome {
    counting::identity(10_000, 20).map(|n| format!("{n} quadruples, residual exactly 0"))
}

fn attribution() -> Outcome {
    counting::attribution_partition(20, 1000, 21)?;
    let sum = counting::table4_rowsum()?;
    Ok(format!("20 tables x 1000 samples partitioned; {sum}"))
}

fn overlap() -> Outcome {
    let r = counting::overlap_fixture(0.05)?;
    let n = counting::overlap_random(1000, 22)?;
    Ok(format!("(673, 603) -> {r:.2}; {n} random sets agree"))
}

fn closure() -> Outcome {
    counting::closure_fixture(0.01).map(|c| format!("closure {c:.2}"))
}

fn calculator() -> Outcome {
    let t = calc::sweep()?;
    if t.structures != calc::EXPECTED_STRUCTURES || t.cases != calc::EXPECTED_CASES {
        return Err(format!("enumerated {} structures / {} cases", t.structures, t.cases));
    }
    Ok(format!("{} expressions over {} shapes", t.cases, t.structures))
}

fn mlp() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        worst = worst.max(nn::gradient_error(&[FEATURE_DIM, 8, 4, 1], seed));
    }
    if worst >= 1e-4 {
        return Err(format!("gradient relative error {worst:e}"));
    }
    let (xs, labels, groups) = nn::separable_blobs(200, 20, FEATURE_DIM, 23);
    let cfg = TrainConfig::default();
    let (m1, _) = gate::train_gate(&xs, &labels, &groups, &cfg, 0, 0.05).map_err(|e| e.to_string())?;
    let hits = xs
        .iter()
        .zip(&labels)
        .filter(|(x, l)| (predict_continue(&m1, x).unwrap() >= 0.5) == (l.decision == GateAction::Continue))
        .count();
    let acc = hits as f64 / xs.len() as f64;
    if acc < 0.95 || m1.metadata.epochs > 500 {
        return Err(format!("train accuracy {acc:.3} after {} epochs", m1.metadata.epochs));
    }
    let (m2, _) = gate::train_gate(&xs, &labels, &groups, &cfg, 0, 0.05).map_err(|e| e.to_string())?;
    if m1.to_json() != m2.to_json() {
        return Err("same-seed runs differ".into());
    }
    Ok(format!("max grad error {worst:.1e}; train accuracy {acc:.3} in {} epochs; weights identical", m1.metadata.epochs))
}

fn fold_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for trial in 0..100 {
        let rows = rng.gen_range(10..200);
        let n_groups = rng.gen_range(5..40);
        let groups: Vec<String> = (0..rows).map(|_| format!("q{}", rng.gen_range(0..n_groups))).collect();
        let folds = group_kfold(&groups, 5);
        let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
        let mut covered = BTreeSet::new();
        for (k, test) in folds.iter().enumerate() {
            for &i in test {
                if !covered.insert(i) {
                    return Err(format!("trial {trial}: row {i} in two test folds"));
                }
                if *fold_of.entry(groups[i].as_str()).or_insert(k) != k {
                    return Err(format!("trial {trial}: {} on both sides of fold {k}", groups[i]));
                }
            }
        }
        if covered.len() != rows {
            return Err(format!("trial {trial}: {} of {rows} rows tested", covered.len()));
        }
    }
    Ok("100 random assignments, no group split".into())
}

fn toolgap(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_toolgap"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("toolgap {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(dir: &Path, jobs: &str) -> Result<Duration, String> {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let start = Instant::now();
    toolgap(&["run", "--out", &d("run"), "--jobs", jobs])?;
    toolgap(&["diagnose", "--results", &d("run")])?;
    toolgap(&["gate-train", "--out", &d("gate.json"), "--jobs", jobs])?;
    toolgap(&["gate-run", "--gate", &d("gate.json"), "--out", &d("gated"), "--critic", "--jobs", jobs])?;
    toolgap(&["diagnose", "--results", &d("gated")])?;
    Ok(start.elapsed())
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    let mut slowest = Duration::ZERO;
    for (name, jobs) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let dir = tmp.path().join(name);
        let took = pipeline(&dir, jobs)?;
        if took >= Duration::from_secs(10) {
            return Err(format!("pipeline with --jobs {jobs} took {took:.2?}"));
        }
        slowest = slowest.max(took);
        runs.push(snapshot(&dir));
    }
    for required in ["run/report.txt", "run/report.json", "gated/report.txt", "gated/comparison.json", "gate.json"] {
        if !runs[0].contains_key(required) {
            return Err(format!("{required} missing"));
        }
    }
    for (i, other) in runs.iter().enumerate().skip(1) {
        let a: BTreeSet<&String> = runs[0].keys().collect();
        let b: BTreeSet<&String> = other.keys().collect();
        if a != b {
            return Err(format!("run {i} produced a different file set"));
        }
        if let Some(k) = runs[0].keys().find(|k| runs[0][*k] != other[*k]) {
            return Err(format!("{k} differs in run {i}"));
        }
    }
    Ok(format!("{} files byte-identical over 3 runs, slowest {slowest:.2?}", runs[0].len()))
}

fn validators() -> Outcome {
    golden::check_golden().map(|n| format!("{n} sentences, no false accepts or rejects"))
}

fn neutrality() -> Outcome {
    let corpus = toy_corpus();
    let backend = gate_runs::demo_backend();
    let model = gate_runs::toy_model(0);
    let n = gate_runs::tau_one_neutral(&model, &corpus, &backend)?;
    gate_runs::tau_one_neutral(&nn::constant_model(1.0, 0.05), &corpus, &backend)?;
    let plain = gate_runs::turn_overrun(&corpus, &backend, 3, false)?;
    let critic = gate_runs::turn_overrun(&corpus, &backend, 3, true)?;
    Ok(format!("{n} samples identical at tau = 1; worst overrun {} turns (limit 3)", plain.max(critic)))
}

#[test]
fn acceptance() {
    let criteria: Vec<Criterion> = vec![
        ("decomposition fixture", Some(Duration::from_secs(1)), decomposition),
        ("oracle/turn fixture", None, probes),
        ("identity property", None, identity),
        ("attribution partition", None, attribution),
        ("overlap fixture", None, overlap),
        ("gap-closure fixture", None, closure),
        ("calculator oracle equivalence", Some(Duration::from_secs(30)), calculator),
        ("MLP gradient check and training", None, mlp),
        ("fold hygiene", None, fold_hygiene),
        ("end-to-end determinism", None, end_to_end),
        ("distractor validators", None, validators),
        ("gate neutrality", None, neutrality),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        match timed(limit, f) {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(e) => {
                println!("FAIL {:>2} {name}: {e}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
