//! Group-aware fold assignment, feature standardization and ranking AUC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Assigns whole groups to `k` folds: groups in decreasing size order
/// (ties by name) each go to the currently lightest fold (ties: lowest
/// index). Returns the test-row indices of each fold.
pub fn group_kfold(groups: &[String], k: usize) -> Vec<Vec<usize>> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        *sizes.entry(g.as_str()).or_default() += 1;
    }
    let k = k.min(sizes.len()).max(1);
    let mut order: Vec<(&str, usize)> = sizes.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut load = vec![0usize; k];
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, n) in order {
        let f = (0..k).min_by_key(|&i| (load[i], i)).expect("k >= 1");
        load[f] += n;
        fold_of.insert(g, f);
    }
    let mut folds = vec![Vec::new(); k];
    for (i, g) in groups.iter().enumerate() {
        folds[fold_of[g.as_str()]].push(i);
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero-variance features, mapped to 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let constant: Vec<bool> = var.iter().map(|v| *v <= 1e-24).collect();
        let std = var
            .iter()
            .zip(&constant)
            .map(|(v, c)| if *c { 1.0 } else { v.sqrt() })
            .collect();
        Self { mean, std, constant }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| if self.constant[i] { 0.0 } else { (v - self.mean[i]) / self.std[i] })
            .collect()
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties counted as
/// half. `None` when only one class is present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut wins = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            wins += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos * neg) as f64)
}
