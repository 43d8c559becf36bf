//! Selection metrics against a known truth.

use serde::{Deserialize, Serialize};

use semiknock_core::{Error, Result, SelectionReport};

use crate::settings::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub fdp: f64,
    pub power: f64,
    pub type_i: f64,
}

/// FDP, power and type-I error of a selection. Empty denominators are
/// clamped to 1, so an empty selection has FDP 0.
pub fn metrics_from_selection(selected: &[bool], truth: &GroundTruth) -> Result<SelectionMetrics> {
    if selected.len() != truth.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} selection flags for {} features",
            selected.len(),
            truth.p()
        )));
    }
    let mut counts = [0usize; 4]; // [selected null, selected important, null, important]
    for (&s, &imp) in selected.iter().zip(&truth.important) {
        counts[2 + imp as usize] += 1;
        if s {
            counts[imp as usize] += 1;
        }
    }
    let [false_sel, true_sel, nulls, important] = counts;
    Ok(SelectionMetrics {
        fdp: false_sel as f64 / (false_sel + true_sel).max(1) as f64,
        power: true_sel as f64 / important.max(1) as f64,
        type_i: false_sel as f64 / nulls.max(1) as f64,
    })
}

/// Metrics of a report; features absent from the report count as not
/// selected.
pub fn metrics(report: &SelectionReport, truth: &GroundTruth) -> Result<SelectionMetrics> {
    let mut selected = vec![false; truth.p()];
    for d in &report.decisions {
        let slot = selected.get_mut(d.feature_index).ok_or_else(|| {
            Error::DimensionMismatch(format!(
                "feature {} outside a truth of {} features",
                d.feature_index,
                truth.p()
            ))
        })?;
        *slot = d.selected;
    }
    metrics_from_selection(&selected, truth)
}

/// Mann-Whitney AUC of `scores` for separating important from null
/// features, with ties counted one half.
pub fn auc_from_scores(scores: &[f64], truth: &GroundTruth) -> Result<f64> {
    if scores.len() != truth.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} features",
            scores.len(),
            truth.p()
        )));
    }
    let important = truth.important_indices();
    let nulls = truth.null_indices();
    if important.is_empty() || nulls.is_empty() {
        return Err(Error::InvalidParameter(
            "AUC needs at least one important and one null feature".into(),
        ));
    }
    // Rank-sum form: O(p log p) rather than all pairs.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    let n1 = important.len() as f64;
    let n0 = nulls.len() as f64;
    let rank_sum: f64 = important.iter().map(|&j| ranks[j]).sum();
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Empirical 1-Wasserstein distance between two equal-size samples: the
/// mean absolute difference of their order statistics.
pub fn wasserstein_1d(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.len() != sample_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "samples of sizes {} and {}",
            sample_a.len(),
            sample_b.len()
        )));
    }
    if sample_a.is_empty() {
        return Err(Error::InvalidParameter("samples are empty".into()));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
