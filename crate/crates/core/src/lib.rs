//! Semi-knockoff conditional independence tests for pre-trained models.
//!
//! For each feature, two perturbed copies of the inputs are built by
//! resampling the feature around its conditional mean, once ignoring the
//! response and once using it. Comparing the model's losses on the two
//! copies gives a paired sample whose signed-rank or sign test is a valid
//! p-value for conditional independence, and whose mean difference feeds a
//! knockoff threshold with finite-sample FDR control.

pub mod data;
pub mod error;
pub mod imputer;
pub mod inference;
pub mod loss;
pub mod models;
pub mod rng;
pub mod sampler;

pub use data::{load_dataset, DataFormat, TabularDataset, TaskKind};
pub use error::{BridgeError, Error, ErrorClass, Result};
pub use imputer::{
    fit_imputer_pair, fit_ridge, ConditionalMeanOracle, GaussianOracle, ImputerPair,
    JointGaussianOracle, RidgeRegression,
};
pub use inference::{
    run_semi_knockoffs, FeatureDecision, Imputation, Method, PairedLossSample, RunConfig,
    SelectionReport,
};
pub use loss::{evaluate_loss, LossFunction, PredictiveModel};
pub use rng::RngStream;
pub use sampler::{draw_batch, draw_semi_knockoff, ResidualPools, SemiKnockoffDraw};
