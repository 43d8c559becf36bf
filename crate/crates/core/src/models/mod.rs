//! Built-in predictive models and the external-model bridge.

mod external;
mod linear;
mod stumps;

use std::path::PathBuf;
use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::loss::PredictiveModel;
use crate::rng::RngStream;

pub use external::{ExternalModel, ExternalModelHandle};
pub use linear::{fit_linear, LinearModel, Link};
pub use stumps::{
    fit_boosted_stumps, fit_boosted_stumps_with, BoostedStumpsModel, Stump, StumpsConfig,
    DEFAULT_LEARNING_RATE, DEFAULT_ROUNDS,
};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 0.1;
pub const DEFAULT_BRIDGE_TIMEOUT_SECS: f64 = 30.0;

/// A model that ignores its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub value: f64,
}

impl PredictiveModel for ConstantModel {
    fn id(&self) -> &str {
        "constant"
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(vec![self.value; inputs.nrows()])
    }
}

/// Which model to obtain for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear {
        ridge_lambda: f64,
    },
    BoostedStumps {
        rounds: usize,
        learning_rate: f64,
    },
    External {
        path: PathBuf,
        args: Vec<String>,
        timeout_secs: f64,
    },
}

impl ModelSpec {
    pub fn linear() -> Self {
        ModelSpec::Linear {
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }

    pub fn boosted_stumps() -> Self {
        ModelSpec::BoostedStumps {
            rounds: DEFAULT_ROUNDS,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }

    /// Fits a built-in model on `data`, or connects to the external one.
    pub fn fit(&self, data: &TabularDataset, rng: &RngStream) -> Result<Box<dyn PredictiveModel>> {
        Ok(match self {
            ModelSpec::Linear { ridge_lambda } => Box::new(fit_linear(data, *ridge_lambda)?),
            ModelSpec::BoostedStumps {
                rounds,
                learning_rate,
            } => Box::new(fit_boosted_stumps(data, *rounds, *learning_rate, rng)?),
            ModelSpec::External {
                path,
                args,
                timeout_secs,
            } => {
                if !(*timeout_secs > 0.0 && timeout_secs.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "timeout must be positive, got {timeout_secs}"
                    )));
                }
                let handle = ExternalModelHandle {
                    executable_path: path.clone(),
                    startup_args: args.clone(),
                    request_timeout: Duration::from_secs_f64(*timeout_secs),
                };
                Box::new(ExternalModel::start(handle, data.p())?)
            }
        })
    }
}
