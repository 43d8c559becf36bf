//! One-sided paired tests on loss differences.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest number of nonzero differences for which the Wilcoxon null
/// distribution is computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// Below this many nonzero differences the sign-test tail is summed with
/// exact integer binomial coefficients.
const SIGN_TEST_EXACT_MAX: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Differences tend to be positive.
    #[default]
    Greater,
}

fn nonzero(differences: &[f64]) -> Result<Vec<f64>> {
    if differences.is_empty() {
        return Err(Error::InvalidParameter(
            "paired test needs at least one difference".into(),
        ));
    }
    if differences.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter(
            "paired differences must be finite".into(),
        ));
    }
    Ok(differences.iter().copied().filter(|&d| d != 0.0).collect())
}

/// Twice the average rank of each `|d|` (1-based, ties share their mean
/// rank). Doubling keeps tied ranks integral.
pub fn doubled_abs_ranks(values: &[f64]) -> Vec<u64> {
    let m = values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].abs().total_cmp(&values[b].abs()));
    let mut ranks = vec![0u64; m];
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && values[order[end]].abs() == values[order[start]].abs() {
            end += 1;
        }
        // Positions start+1 ..= end share rank (start + 1 + end) / 2.
        let doubled = (start + 1 + end) as u64;
        for &idx in &order[start..end] {
            ranks[idx] = doubled;
        }
        start = end;
    }
    ranks
}

/// Wilcoxon signed-rank p-value for `H1: differences > 0`.
///
/// Zeros are dropped and ties receive average ranks. With at most
/// [`WILCOXON_EXACT_MAX`] nonzero differences the p-value is exact,
/// conditional on the observed tie pattern; beyond that a normal
/// approximation with tie-corrected variance and a 0.5 continuity
/// correction is used. All-zero input yields 1.
pub fn wilcoxon_signed_rank(differences: &[f64], alternative: Alternative) -> Result<f64> {
    let Alternative::Greater = alternative;
    let d = nonzero(differences)?;
    let m = d.len();
    if m == 0 {
        return Ok(1.0);
    }
    let ranks = doubled_abs_ranks(&d);
    let observed: u64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();

    if m <= WILCOXON_EXACT_MAX {
        // counts[s] = number of sign assignments with doubled W+ equal to s.
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let upper: u64 = counts[observed as usize..].iter().sum();
        return Ok(upper as f64 / (1u64 << m) as f64);
    }

    let mf = m as f64;
    let w_plus = observed as f64 / 2.0;
    let mean = mf * (mf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term / 48.0;
    if !(var > 0.0) {
        return Ok(1.0);
    }
    let z = (w_plus - mean - 0.5) / var.sqrt();
    Ok(upper_normal_tail(z))
}

/// `P(Z >= z)` for a standard normal `Z`.
pub fn upper_normal_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Sign-test p-value for `H1: differences > 0`: `P(Bin(m, 1/2) >= #positives)`
/// over the `m` nonzero differences.
pub fn sign_test(differences: &[f64], alternative: Alternative) -> Result<f64> {
    let Alternative::Greater = alternative;
    let d = nonzero(differences)?;
    let m = d.len();
    if m == 0 {
        return Ok(1.0);
    }
    let positives = d.iter().filter(|&&v| v > 0.0).count();
    if m <= SIGN_TEST_EXACT_MAX {
        let mut coef: u128 = 1;
        let mut tail: u128 = 0;
        for i in 0..=m {
            if i >= positives {
                tail += coef;
            }
            // C(m, i+1) = C(m, i) (m - i) / (i + 1)
            coef = coef * (m - i) as u128 / (i + 1) as u128;
        }
        return Ok(tail as f64 / 2f64.powi(m as i32));
    }
    if positives == 0 {
        return Ok(1.0);
    }
    let binom = Binomial::new(0.5, m as u64).expect("valid binomial parameters");
    Ok(binom.sf(positives as u64 - 1).clamp(0.0, 1.0))
}
