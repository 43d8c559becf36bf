use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{TabularDataset, TaskKind};
use crate::error::{Error, Result};
use crate::loss::PredictiveModel;
use crate::rng::RngStream;

pub const DEFAULT_ROUNDS: usize = 200;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

/// Probability floor applied to classification outputs.
const PROBABILITY_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature_index: usize,
    pub split_value: f64,
    /// Output for `x[feature_index] <= split_value`.
    pub left_value: f64,
    pub right_value: f64,
}

impl Stump {
    fn eval(&self, x: f64) -> f64 {
        if x <= self.split_value {
            self.left_value
        } else {
            self.right_value
        }
    }
}

/// Squared-error gradient boosting with depth-one trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumpsModel {
    pub stumps: Vec<Stump>,
    pub learning_rate: f64,
    pub base_value: f64,
    pub rounds: usize,
    pub n_features: usize,
    /// Classification outputs are clipped into `(0, 1)`.
    pub probability_output: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StumpsConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Fraction of features scanned per round; 1 scans all of them and
    /// leaves the random stream untouched.
    pub feature_fraction: f64,
}

impl Default for StumpsConfig {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            learning_rate: DEFAULT_LEARNING_RATE,
            feature_fraction: 1.0,
        }
    }
}

impl PredictiveModel for BoostedStumpsModel {
    fn id(&self) -> &str {
        "boosted_stumps"
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        if inputs.ncols() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features,
                inputs.ncols()
            )));
        }
        let mut out = vec![0.0; inputs.nrows()];
        for stump in &self.stumps {
            let col = inputs.column(stump.feature_index);
            for (o, &x) in out.iter_mut().zip(col.iter()) {
                *o += stump.eval(x);
            }
        }
        for o in out.iter_mut() {
            *o = self.base_value + self.learning_rate * *o;
            if self.probability_output {
                *o = o.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP);
            }
        }
        Ok(out)
    }
}

pub fn fit_boosted_stumps(
    data: &TabularDataset,
    rounds: usize,
    learning_rate: f64,
    rng: &RngStream,
) -> Result<BoostedStumpsModel> {
    fit_boosted_stumps_with(
        data,
        &StumpsConfig {
            rounds,
            learning_rate,
            feature_fraction: 1.0,
        },
        rng,
    )
}

struct Candidate {
    reduction: f64,
    stump: Stump,
}

/// Best single split of `residuals` on one feature. Splits sit at midpoints
/// of consecutive distinct values; ties keep the lowest split.
fn best_split(
    order: &[usize],
    column: &[f64],
    residuals: &[f64],
    feature: usize,
) -> Option<Candidate> {
    let n = order.len();
    let total: f64 = residuals.iter().sum();
    let base = total * total / n as f64;
    let mut left_sum = 0.0;
    let mut best: Option<Candidate> = None;
    for k in 0..n - 1 {
        left_sum += residuals[order[k]];
        let (a, b) = (column[order[k]], column[order[k + 1]]);
        if a == b {
            continue;
        }
        let nl = (k + 1) as f64;
        let nr = (n - k - 1) as f64;
        let right_sum = total - left_sum;
        let reduction = left_sum * left_sum / nl + right_sum * right_sum / nr - base;
        if best.as_ref().is_none_or(|c| reduction > c.reduction) {
            let mut split = a + 0.5 * (b - a);
            if split >= b {
                split = a;
            }
            best = Some(Candidate {
                reduction,
                stump: Stump {
                    feature_index: feature,
                    split_value: split,
                    left_value: left_sum / nl,
                    right_value: right_sum / nr,
                },
            });
        }
    }
    best
}

/// Boosting with an exhaustive split scan per round. Gain ties go to the
/// lowest feature index, then the lowest split value. Boosting stops early
/// once no split reduces the residual sum of squares.
pub fn fit_boosted_stumps_with(
    data: &TabularDataset,
    config: &StumpsConfig,
    rng: &RngStream,
) -> Result<BoostedStumpsModel> {
    if config.rounds == 0 {
        return Err(Error::InvalidParameter("rounds must be at least 1".into()));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must lie in (0, 1], got {}",
            config.learning_rate
        )));
    }
    if !(config.feature_fraction > 0.0 && config.feature_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "feature fraction must lie in (0, 1], got {}",
            config.feature_fraction
        )));
    }
    let (n, p) = (data.n(), data.p());
    let y = data.response();
    let base_value = y.iter().sum::<f64>() / n as f64;
    let columns: Vec<Vec<f64>> = (0..p).map(|j| data.column(j)).collect();
    let orders: Vec<Vec<usize>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let per_round = ((config.feature_fraction * p as f64).ceil() as usize).clamp(1, p);
    let mut gen = (per_round < p).then(|| rng.rng());

    let mut residuals: Vec<f64> = y.iter().map(|v| v - base_value).collect();
    let mut stumps = Vec::with_capacity(config.rounds);
    for _ in 0..config.rounds {
        let features: Vec<usize> = match gen.as_mut() {
            Some(g) => {
                let mut f = sample(g, p, per_round).into_vec();
                f.sort_unstable();
                f
            }
            None => (0..p).collect(),
        };
        let mut best: Option<Candidate> = None;
        for &j in &features {
            if let Some(c) = best_split(&orders[j], &columns[j], &residuals, j) {
                if best.as_ref().is_none_or(|b| c.reduction > b.reduction) {
                    best = Some(c);
                }
            }
        }
        let scale: f64 = residuals.iter().map(|r| r * r).sum();
        let Some(best) = best.filter(|c| c.reduction > 1e-14 * scale && scale > 0.0) else {
            break;
        };
        let col = &columns[best.stump.feature_index];
        for (r, &x) in residuals.iter_mut().zip(col) {
            *r -= config.learning_rate * best.stump.eval(x);
        }
        stumps.push(best.stump);
    }
    Ok(BoostedStumpsModel {
        stumps,
        learning_rate: config.learning_rate,
        base_value,
        rounds: config.rounds,
        n_features: p,
        probability_output: data.task_kind() == TaskKind::BinaryClassification,
    })
}
