//! Per-feature statistics, p-values and selection.

mod paired;
mod report;
mod threshold;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::imputer::{fit_imputer_pair, ConditionalMeanOracle};
use crate::loss::{evaluate_loss, LossFunction, PredictiveModel};
use crate::rng::RngStream;
use crate::sampler::{draw_from_pools, ResidualPools, SemiKnockoffDraw};

pub use paired::{
    doubled_abs_ranks, sign_test, upper_normal_tail, wilcoxon_signed_rank, Alternative,
    WILCOXON_EXACT_MAX,
};
pub use report::{FeatureRecord, SelectionReportJson};
pub use threshold::{benjamini_hochberg, knockoff_threshold};

/// Losses of one feature under both semi-knockoff copies.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedLossSample {
    pub losses_one: Vec<f64>,
    pub losses_two: Vec<f64>,
    pub differences: Vec<f64>,
}

impl PairedLossSample {
    pub fn new(losses_one: Vec<f64>, losses_two: Vec<f64>) -> Result<Self> {
        if losses_one.len() != losses_two.len() {
            return Err(Error::DimensionMismatch(format!(
                "loss vectors of lengths {} and {}",
                losses_one.len(),
                losses_two.len()
            )));
        }
        let differences = losses_one
            .iter()
            .zip(&losses_two)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            losses_one,
            losses_two,
            differences,
        })
    }

    /// Mean paired difference.
    pub fn statistic(&self) -> f64 {
        if self.differences.is_empty() {
            return 0.0;
        }
        self.differences.iter().sum::<f64>() / self.differences.len() as f64
    }
}

struct LossAccumulator {
    one: Vec<f64>,
    two: Vec<f64>,
    draws: usize,
}

impl LossAccumulator {
    fn new(n: usize) -> Self {
        Self {
            one: vec![0.0; n],
            two: vec![0.0; n],
            draws: 0,
        }
    }

    fn add<M: PredictiveModel + ?Sized>(
        &mut self,
        model: &M,
        loss: LossFunction,
        draw: &SemiKnockoffDraw,
        response: &[f64],
    ) -> Result<()> {
        if response.len() != self.one.len() {
            return Err(Error::DimensionMismatch(format!(
                "draw has {} rows but response has {}",
                self.one.len(),
                response.len()
            )));
        }
        let a = evaluate_loss(model, loss, &draw.inputs_one, response)?;
        let b = evaluate_loss(model, loss, &draw.inputs_two, response)?;
        for (acc, v) in self.one.iter_mut().zip(a) {
            *acc += v;
        }
        for (acc, v) in self.two.iter_mut().zip(b) {
            *acc += v;
        }
        self.draws += 1;
        Ok(())
    }

    fn finish(self) -> Result<PairedLossSample> {
        let k = self.draws as f64;
        if self.draws == 1 {
            return PairedLossSample::new(self.one, self.two);
        }
        PairedLossSample::new(
            self.one.into_iter().map(|v| v / k).collect(),
            self.two.into_iter().map(|v| v / k).collect(),
        )
    }
}

/// Per-sample losses under each copy of the draws, averaged over the draws.
pub fn paired_losses<M: PredictiveModel + ?Sized>(
    model: &M,
    loss: LossFunction,
    draws: &[SemiKnockoffDraw],
    response: &[f64],
) -> Result<PairedLossSample> {
    let first = draws
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one draw is required".into()))?;
    let mut acc = LossAccumulator::new(first.inputs_one.nrows());
    for draw in draws {
        acc.add(model, loss, draw, response)?;
    }
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wilcoxon,
    SignTest,
    KnockoffThreshold,
    BhOnWilcoxon,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Wilcoxon,
        Method::SignTest,
        Method::KnockoffThreshold,
        Method::BhOnWilcoxon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wilcoxon => "wilcoxon",
            Method::SignTest => "sign_test",
            Method::KnockoffThreshold => "knockoff_threshold",
            Method::BhOnWilcoxon => "bh_on_wilcoxon",
        }
    }

    pub fn yields_p_values(self) -> bool {
        !matches!(self, Method::KnockoffThreshold)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// How the conditional means of each feature are obtained.
#[derive(Clone, Copy)]
pub enum Imputation<'a> {
    /// Ridge imputers fitted on the data.
    Ridge { lambda: f64 },
    /// Known conditional means (simulation only).
    Oracle(&'a dyn ConditionalMeanOracle),
}

impl fmt::Debug for Imputation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Imputation::Ridge { lambda } => {
                f.debug_struct("Ridge").field("lambda", lambda).finish()
            }
            Imputation::Oracle(_) => f.write_str("Oracle"),
        }
    }
}

impl Imputation<'_> {
    pub fn pools(&self, data: &TabularDataset, feature: usize) -> Result<ResidualPools> {
        match *self {
            Imputation::Ridge { lambda } => Ok(ResidualPools::from(&fit_imputer_pair(
                data, feature, lambda,
            )?)),
            Imputation::Oracle(oracle) => ResidualPools::from_oracle(data, oracle, feature),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig<'a> {
    pub method: Method,
    /// `q` for knockoff and BH selection, `alpha` for per-feature tests.
    pub level: f64,
    pub permutations: usize,
    pub imputation: Imputation<'a>,
    /// Restrict testing to these features; all features when `None`.
    pub features: Option<Vec<usize>>,
    /// Worker threads; `None` uses the ambient rayon pool and `Some(1)`
    /// runs serially.
    pub workers: Option<usize>,
}

impl<'a> RunConfig<'a> {
    pub fn new(method: Method, level: f64, imputation: Imputation<'a>) -> Self {
        Self {
            method,
            level,
            permutations: 1,
            imputation,
            features: None,
            workers: None,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "level must lie in (0, 1], got {}",
                self.level
            )));
        }
        if self.permutations == 0 {
            return Err(Error::InvalidParameter(
                "permutations must be at least 1".into(),
            ));
        }
        if let Imputation::Ridge { lambda } = self.imputation {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "lambda must be finite and nonnegative, got {lambda}"
                )));
            }
        }
        if let Some(features) = &self.features {
            if features.is_empty() {
                return Err(Error::InvalidParameter("feature subset is empty".into()));
            }
            if let Some(&bad) = features.iter().find(|&&j| j >= p) {
                return Err(Error::InvalidParameter(format!(
                    "feature {bad} out of range for p = {p}"
                )));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Paired losses for one feature, averaged over `permutations` draws;
/// draw `d` uses `rng.derive(d)`.
pub fn feature_paired_losses<M: PredictiveModel + ?Sized>(
    data: &TabularDataset,
    model: &M,
    loss: LossFunction,
    pools: &ResidualPools,
    permutations: usize,
    rng: &RngStream,
) -> Result<PairedLossSample> {
    if permutations == 0 {
        return Err(Error::InvalidParameter(
            "permutations must be at least 1".into(),
        ));
    }
    let mut acc = LossAccumulator::new(data.n());
    for d in 0..permutations {
        let draw = draw_from_pools(data, pools, &rng.derive(d as u64))?;
        acc.add(model, loss, &draw, data.response())?;
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDecision {
    pub feature_index: usize,
    pub name: Option<String>,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub selected: bool,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Method,
    pub level: f64,
    pub seed: u64,
    /// Knockoff threshold; `+inf` when nothing qualifies. `None` for the
    /// p-value methods.
    pub threshold: Option<f64>,
    pub decisions: Vec<FeatureDecision>,
}

impl SelectionReport {
    pub fn selected_indices(&self) -> Vec<usize> {
        self.decisions
            .iter()
            .filter(|d| d.selected)
            .map(|d| d.feature_index)
            .collect()
    }
}

struct FeatureOutcome {
    statistic: f64,
    p_value: Option<f64>,
}

fn feature_outcome<M: PredictiveModel + ?Sized>(
    data: &TabularDataset,
    model: &M,
    loss: LossFunction,
    config: &RunConfig<'_>,
    feature: usize,
    rng: &RngStream,
) -> Result<FeatureOutcome> {
    let pools = config.imputation.pools(data, feature)?;
    let sample = feature_paired_losses(data, model, loss, &pools, config.permutations, rng)?;
    let statistic = sample.statistic();
    if !statistic.is_finite() {
        return Err(Error::InvalidData("non-finite feature statistic".into()));
    }
    let p_value = match config.method {
        Method::Wilcoxon | Method::BhOnWilcoxon => Some(wilcoxon_signed_rank(
            &sample.differences,
            Alternative::Greater,
        )?),
        Method::SignTest => Some(sign_test(&sample.differences, Alternative::Greater)?),
        Method::KnockoffThreshold => None,
    };
    Ok(FeatureOutcome { statistic, p_value })
}

/// Tests every requested feature of `data` against `model`.
///
/// Feature `j` draws from `rng.derive(j)`, so the report depends only on
/// the inputs and the seed, never on the worker count.
pub fn run_semi_knockoffs<M: PredictiveModel + ?Sized>(
    data: &TabularDataset,
    model: &M,
    loss: LossFunction,
    config: &RunConfig<'_>,
    rng: &RngStream,
) -> Result<SelectionReport> {
    config.validate(data.p())?;
    let features: Vec<usize> = config
        .features
        .clone()
        .unwrap_or_else(|| (0..data.p()).collect());

    let one = |j: usize| {
        feature_outcome(data, model, loss, config, j, &rng.derive(j as u64))
            .map_err(|e| e.in_feature(j))
    };
    let outcomes: Vec<FeatureOutcome> = match config.workers {
        Some(1) => features.iter().map(|&j| one(j)).collect::<Result<_>>()?,
        None => features
            .par_iter()
            .map(|&j| one(j))
            .collect::<Result<_>>()?,
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {w} workers: {e}")))?
            .install(|| features.par_iter().map(|&j| one(j)).collect::<Result<_>>())?,
    };

    let (threshold, selected) = match config.method {
        Method::KnockoffThreshold => {
            let stats: Vec<f64> = outcomes.iter().map(|o| o.statistic).collect();
            let (t, sel) = knockoff_threshold(&stats, config.level)?;
            (Some(t), sel)
        }
        Method::Wilcoxon | Method::SignTest => (
            None,
            outcomes
                .iter()
                .map(|o| o.p_value.is_some_and(|p| p <= config.level))
                .collect(),
        ),
        Method::BhOnWilcoxon => {
            let ps: Vec<f64> = outcomes.iter().map(|o| o.p_value.unwrap_or(1.0)).collect();
            (None, benjamini_hochberg(&ps, config.level)?)
        }
    };

    let decisions = features
        .iter()
        .zip(outcomes)
        .zip(selected)
        .map(|((&j, o), selected)| FeatureDecision {
            feature_index: j,
            name: data.column_name(j).map(str::to_owned),
            statistic: o.statistic,
            p_value: o.p_value,
            selected,
            method: config.method,
        })
        .collect();
    Ok(SelectionReport {
        method: config.method,
        level: config.level,
        seed: rng.root_seed(),
        threshold,
        decisions,
    })
}
