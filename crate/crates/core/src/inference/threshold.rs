//! Knockoff+ data-dependent threshold and Benjamini-Hochberg step-up.

use crate::error::{Error, Result};

/// Knockoff+ threshold at level `q`.
///
/// Scans the nonzero magnitudes `|W_j|` in increasing order and returns the
/// first `t` with `(1 + #{W_j <= -t}) / max(1, #{W_j >= t}) <= q`, or
/// `+inf` when none qualifies. Feature `j` is selected iff `W_j >= t`.
pub fn knockoff_threshold(statistics: &[f64], q: f64) -> Result<(f64, Vec<bool>)> {
    if statistics.is_empty() {
        return Err(Error::InvalidParameter("no statistics to threshold".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    if statistics.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidParameter("statistics must be finite".into()));
    }
    let mut positives: Vec<f64> = statistics.iter().copied().filter(|&w| w > 0.0).collect();
    let mut negatives: Vec<f64> = statistics
        .iter()
        .filter(|&&w| w < 0.0)
        .map(|w| -w)
        .collect();
    positives.sort_by(f64::total_cmp);
    negatives.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = positives.iter().chain(&negatives).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let threshold = candidates
        .into_iter()
        .find(|&t| {
            let pos = positives.len() - positives.partition_point(|&w| w < t);
            let neg = negatives.len() - negatives.partition_point(|&w| w < t);
            (1 + neg) as f64 / pos.max(1) as f64 <= q
        })
        .unwrap_or(f64::INFINITY);
    let selected = statistics.iter().map(|&w| w >= threshold).collect();
    Ok((threshold, selected))
}

/// Benjamini-Hochberg step-up at level `q`: rejects every p-value at or
/// below the largest `p_(k)` with `p_(k) <= k q / m`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Result<Vec<bool>> {
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter(
            "p-values must lie in [0, 1]".into(),
        ));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "q must lie in (0, 1], got {q}"
        )));
    }
    let m = p_values.len();
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = sorted
        .iter()
        .enumerate()
        .rev()
        .find(|&(i, &p)| p <= (i + 1) as f64 * q / m as f64)
        .map(|(_, &p)| p);
    Ok(match cutoff {
        Some(c) => p_values.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    })
}
