//! Monte-Carlo replication of full semi-knockoff runs.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use semiknock_core::models::ModelSpec;
use semiknock_core::{
    run_semi_knockoffs, Error, Imputation, LossFunction, Method, Result, RngStream, RunConfig,
    SelectionReport, TaskKind,
};

use crate::metrics::{auc_from_scores, metrics};
use crate::settings::{simulate, GroundTruth, Simulated, SyntheticSetting};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImputerChoice {
    Ridge { lambda: f64 },
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub method: Method,
    pub level: f64,
    pub permutations: usize,
    pub imputer: ImputerChoice,
    pub model: ModelSpec,
    /// Squared error for regression and cross-entropy for classification
    /// when unset.
    pub loss: Option<LossFunction>,
}

impl MethodConfig {
    pub fn new(method: Method, level: f64) -> Self {
        Self {
            method,
            level,
            permutations: 1,
            imputer: ImputerChoice::Ridge { lambda: 0.1 },
            model: ModelSpec::boosted_stumps(),
            loss: None,
        }
    }

    pub fn loss_for(&self, task: TaskKind) -> LossFunction {
        self.loss.unwrap_or(match task {
            TaskKind::Regression => LossFunction::SquaredError,
            TaskKind::BinaryClassification => LossFunction::cross_entropy(),
        })
    }
}

/// One full pipeline run on `sim`: fits the model with `rng.derive(1)` and
/// tests with `rng.derive(2)`.
pub fn run_on(sim: &Simulated, config: &MethodConfig, rng: &RngStream) -> Result<SelectionReport> {
    let model = config.model.fit(&sim.data, &rng.derive(1))?;
    let imputation = match config.imputer {
        ImputerChoice::Ridge { lambda } => Imputation::Ridge { lambda },
        ImputerChoice::Oracle => Imputation::Oracle(sim.oracle()?),
    };
    let mut run = RunConfig::new(config.method, config.level, imputation);
    run.permutations = config.permutations;
    run.workers = Some(1);
    run_semi_knockoffs(
        &sim.data,
        &model,
        config.loss_for(sim.data.task_kind()),
        &run,
        &rng.derive(2),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub fdp: f64,
    pub power: f64,
    pub type_i: f64,
    pub auc: Option<f64>,
    pub selected: Vec<usize>,
    pub correlated_null_selected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: SyntheticSetting,
    pub method: MethodConfig,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub replicate_count: usize,
    pub type_i_error: f64,
    pub fdr: f64,
    pub power: f64,
    /// Mean over replicates where the AUC is defined.
    pub auc: Option<f64>,
    pub correlated_null_rejection_rate: Option<f64>,
    /// Fraction of replicates selecting each feature index.
    pub selection_frequency: Vec<f64>,
    pub replicates: Vec<ReplicateOutcome>,
    /// Wall time; kept out of files so reruns are byte-identical.
    #[serde(skip)]
    pub runtime_secs: f64,
}

fn scores(report: &SelectionReport, p: usize) -> Vec<f64> {
    let mut s = vec![f64::NEG_INFINITY; p];
    for d in &report.decisions {
        s[d.feature_index] = match d.p_value {
            Some(pv) => 1.0 - pv,
            None => d.statistic,
        };
    }
    s
}

fn outcome(
    replicate: usize,
    report: &SelectionReport,
    truth: &GroundTruth,
) -> Result<ReplicateOutcome> {
    let m = metrics(report, truth)?;
    let auc = auc_from_scores(&scores(report, truth.p()), truth).ok();
    let selected = report.selected_indices();
    Ok(ReplicateOutcome {
        replicate,
        fdp: m.fdp,
        power: m.power,
        type_i: m.type_i,
        auc,
        correlated_null_selected: truth.correlated_null.map(|j| selected.contains(&j)),
        selected,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Runs `replicates` independent simulations; replicate `r` uses
/// `rng.derive(r)` (data from `.derive(0)`, model from `.derive(1)`,
/// permutations from `.derive(2)`).
pub fn run_replicated(
    setting: &SyntheticSetting,
    config: &MethodConfig,
    replicates: usize,
    rng: &RngStream,
    workers: Option<usize>,
) -> Result<ExperimentReport> {
    if replicates == 0 {
        return Err(Error::InvalidParameter(
            "replicates must be at least 1".into(),
        ));
    }
    setting.validate()?;
    let start = Instant::now();
    let one = |r: usize| -> Result<ReplicateOutcome> {
        let stream = rng.derive(r as u64);
        let sim = simulate(setting, &stream.derive(0))?;
        let report = run_on(&sim, config, &stream)?;
        outcome(r, &report, &sim.truth)
    };
    let outcomes: Vec<ReplicateOutcome> = crate::in_pool(workers, || {
        (0..replicates)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()
    })??;

    let count = outcomes.len() as f64;
    let mut frequency = vec![0.0; setting.p];
    for o in &outcomes {
        for &j in &o.selected {
            frequency[j] += 1.0 / count;
        }
    }
    Ok(ExperimentReport {
        config: ExperimentConfig {
            setting: setting.clone(),
            method: config.clone(),
            replicates,
            seed: rng.root_seed(),
        },
        replicate_count: outcomes.len(),
        type_i_error: mean(outcomes.iter().map(|o| o.type_i)).unwrap_or(0.0),
        fdr: mean(outcomes.iter().map(|o| o.fdp)).unwrap_or(0.0),
        power: mean(outcomes.iter().map(|o| o.power)).unwrap_or(0.0),
        auc: mean(outcomes.iter().filter_map(|o| o.auc)),
        correlated_null_rejection_rate: mean(outcomes.iter().filter_map(|o| {
            o.correlated_null_selected
                .map(|s| if s { 1.0 } else { 0.0 })
        })),
        selection_frequency: frequency,
        replicates: outcomes,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

impl ExperimentReport {
    /// Tidy rows `replicate,metric,value`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["replicate", "metric", "value"])?;
        for o in &self.replicates {
            let r = o.replicate.to_string();
            let mut rows = vec![("fdp", o.fdp), ("power", o.power), ("type_i", o.type_i)];
            if let Some(a) = o.auc {
                rows.push(("auc", a));
            }
            if let Some(s) = o.correlated_null_selected {
                rows.push(("correlated_null_selected", if s { 1.0 } else { 0.0 }));
            }
            for (metric, value) in rows {
                w.write_record([r.as_str(), metric, &value.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv output>".into(),
            source: e,
        })
    }
}
