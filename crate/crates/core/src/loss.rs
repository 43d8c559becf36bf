//! Predictive-model abstraction and per-sample losses.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default probability floor for cross-entropy.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-12;

/// A fitted black-box model.
///
/// `predict` must be deterministic and re-entrant: the same batch always
/// yields the same output, from any thread.
pub trait PredictiveModel: Send + Sync {
    fn id(&self) -> &str;

    /// One output per row of `inputs`: a regression score, or the class-1
    /// probability for binary classification.
    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>>;
}

impl<M: PredictiveModel + ?Sized> PredictiveModel for Box<M> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        (**self).predict(inputs)
    }
}

impl<M: PredictiveModel + ?Sized> PredictiveModel for std::sync::Arc<M> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        (**self).predict(inputs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossFunction {
    SquaredError,
    CrossEntropy { clamp_eps: f64 },
}

impl LossFunction {
    pub fn cross_entropy() -> Self {
        LossFunction::CrossEntropy {
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }

    pub fn eval(&self, prediction: f64, target: f64) -> f64 {
        match *self {
            LossFunction::SquaredError => {
                let d = prediction - target;
                d * d
            }
            LossFunction::CrossEntropy { clamp_eps } => {
                let u = prediction.clamp(clamp_eps, 1.0 - clamp_eps);
                // Shifted by the loss of the clamped target itself, so a
                // prediction at the clamp boundary scores exactly zero.
                let floor = -(-clamp_eps).ln_1p();
                let raw = if target >= 0.5 {
                    -u.ln()
                } else {
                    -(-u).ln_1p()
                };
                (raw - floor).max(0.0)
            }
        }
    }
}

/// `loss(model(row_i), response_i)` for every row.
pub fn evaluate_loss<M: PredictiveModel + ?Sized>(
    model: &M,
    loss: LossFunction,
    inputs: &DMatrix<f64>,
    response: &[f64],
) -> Result<Vec<f64>> {
    if inputs.nrows() != response.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} responses",
            inputs.nrows(),
            response.len()
        )));
    }
    let predictions = model.predict(inputs)?;
    if predictions.len() != response.len() {
        return Err(Error::DimensionMismatch(format!(
            "model returned {} predictions for {} rows",
            predictions.len(),
            response.len()
        )));
    }
    predictions
        .iter()
        .zip(response)
        .enumerate()
        .map(|(row, (&u, &y))| {
            if !u.is_finite() {
                return Err(Error::NonFinitePrediction { row });
            }
            Ok(loss.eval(u, y))
        })
        .collect()
}
