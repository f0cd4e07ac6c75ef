//! Detection-quality metrics against ground truth: ranking AUC, best
//! F1 over a threshold sweep, and clustering fragmentation.

use std::collections::BTreeMap;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelprop::Partition;
use crate::suspicion::GroupReport;

/// Quality summary of one detection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub auc_objects: f64,
    pub auc_users: f64,
    pub best_f1_objects: f64,
    pub best_f1_users: f64,
    pub f1_threshold_objects: f64,
    pub f1_threshold_users: f64,
    /// Distinct final labels among each planted group's objects.
    pub num_fragments: Vec<usize>,
    pub converged: bool,
    /// Stage wall times copied from the producing run.
    pub runtime_ms: BTreeMap<String, u64>,
}

/// One row of the threshold sweep behind [`best_f1`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Ranking AUC by the rank-sum estimator; tied scores earn half credit
/// per positive–negative pair. Requires both classes present.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), truth.len());
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "AUC needs at least one positive and one negative entity",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Average ranks across tied runs, then sum positive ranks.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if truth[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = positives as f64;
    let n = negatives as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Sweeps every distinct score as a `score >= t` threshold and returns
/// the rows in descending threshold order.
pub fn sweep_table(scores: &[f64], truth: &[bool]) -> Result<Vec<SweepRow>> {
    assert_eq!(scores.len(), truth.len());
    let total_pos = truth.iter().filter(|&&t| t).count();
    let total_neg = truth.len() - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::invalid(
            "F1 sweep needs at least one positive and one negative entity",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut rows = Vec::new();
    let mut tp = 0usize;
    let mut flagged = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == threshold {
            if truth[order[j]] {
                tp += 1;
            }
            flagged += 1;
            j += 1;
        }
        let precision = tp as f64 / flagged as f64;
        let recall = tp as f64 / total_pos as f64;
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        rows.push(SweepRow {
            threshold,
            precision,
            recall,
            f1,
        });
        i = j;
    }
    Ok(rows)
}

/// The threshold maximizing F1 and that F1; the highest maximizing
/// threshold wins ties.
pub fn best_f1(scores: &[f64], truth: &[bool]) -> Result<(f64, f64)> {
    let rows = sweep_table(scores, truth)?;
    let mut best = rows[0];
    for row in &rows[1..] {
        if row.f1 > best.f1 {
            best = *row;
        }
    }
    Ok((best.threshold, best.f1))
}

/// Distinct final labels among the given ground-truth objects.
pub fn fragmentation(partition: &Partition, truth_objects: &[u32]) -> usize {
    truth_objects
        .iter()
        .map(|&o| partition.labels[o as usize])
        .collect::<HashSet<_>>()
        .len()
}

/// Per-object scores: each object inherits its group's score.
pub fn object_scores(reports: &[GroupReport], partition: &Partition) -> Vec<f64> {
    let mut by_group = vec![0.0f64; partition.groups.len()];
    for r in reports {
        by_group[r.group_id as usize] = r.f;
    }
    partition
        .group_of
        .iter()
        .map(|&g| by_group[g as usize])
        .collect()
}

/// Per-user scores: the maximum score over groups that extracted the
/// user, zero for users never extracted.
pub fn user_scores(reports: &[GroupReport], num_users: usize) -> Vec<f64> {
    let mut scores = vec![0.0f64; num_users];
    for r in reports {
        for &u in &r.users {
            if r.f > scores[u as usize] {
                scores[u as usize] = r.f;
            }
        }
    }
    scores
}
