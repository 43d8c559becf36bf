//! Diagnostic experiments: imputer stability, loss-distribution distance,
//! statistic snapshots and the injected-null protocol for real data.

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use semiknock_core::imputer::{fit_imputer_pair, stability_probe};
use semiknock_core::inference::feature_paired_losses;
use semiknock_core::models::ModelSpec;
use semiknock_core::sampler::draw_from_pools;
use semiknock_core::{
    evaluate_loss, run_semi_knockoffs, Error, Imputation, LossFunction, Method, ResidualPools,
    Result, RngStream, RunConfig, TabularDataset, TaskKind,
};

use crate::experiment::{run_on, ImputerChoice, MethodConfig};
use crate::metrics::wasserstein_1d;
use crate::settings::{simulate, SyntheticSetting};

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn io_error(e: std::io::Error) -> Error {
    Error::Io {
        path: "<csv output>".into(),
        source: e,
    }
}

// ---------------------------------------------------------------------------
// Imputer stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub setting: SyntheticSetting,
    pub sample_sizes: Vec<usize>,
    pub seeds: usize,
    /// Penalty on the summed squared error, so the per-sample ridge
    /// parameter is `penalty / n`.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    pub seed: usize,
    pub null_feature: usize,
    pub null_probe: f64,
    pub important_feature: usize,
    pub important_probe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMedian {
    pub n: usize,
    pub null_median: f64,
    pub important_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub config: StabilityConfig,
    pub seed: u64,
    pub medians: Vec<StabilityMedian>,
    pub rows: Vec<StabilityRow>,
}

/// Coefficient movement when one null and one important feature (drawn at
/// random per seed) are dropped from the ridge fit of `y` on `X`.
pub fn stability_experiment(
    config: &StabilityConfig,
    rng: &RngStream,
    workers: Option<usize>,
) -> Result<StabilityReport> {
    if config.seeds == 0 || config.sample_sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one seed and one sample size".into(),
        ));
    }
    if !(config.penalty > 0.0 && config.penalty.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "penalty must be positive, got {}",
            config.penalty
        )));
    }
    let jobs: Vec<(usize, usize)> = config
        .sample_sizes
        .iter()
        .flat_map(|&n| (0..config.seeds).map(move |s| (n, s)))
        .collect();
    let one = |&(n, seed): &(usize, usize)| -> Result<StabilityRow> {
        let stream = rng.derive(n as u64).derive(seed as u64);
        let mut setting = config.setting.clone();
        setting.n = n;
        let sim = simulate(&setting, &stream.derive(0))?;
        let mut gen = stream.derive(1).rng();
        let pick = |set: Vec<usize>, gen: &mut _| -> Result<usize> {
            set.choose(gen).copied().ok_or_else(|| {
                Error::InvalidParameter("setting lacks null or important features".into())
            })
        };
        let null_feature = pick(sim.truth.null_indices(), &mut gen)?;
        let important_feature = pick(sim.truth.important_indices(), &mut gen)?;
        let lambda = config.penalty / n as f64;
        Ok(StabilityRow {
            n,
            seed,
            null_feature,
            null_probe: stability_probe(&sim.data, null_feature, lambda)?,
            important_feature,
            important_probe: stability_probe(&sim.data, important_feature, lambda)?,
        })
    };
    let rows: Vec<StabilityRow> = crate::in_pool(workers, || {
        jobs.par_iter().map(one).collect::<Result<Vec<_>>>()
    })??;
    let medians = config
        .sample_sizes
        .iter()
        .map(|&n| {
            let nulls: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.null_probe)
                .collect();
            let imps: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.important_probe)
                .collect();
            StabilityMedian {
                n,
                null_median: median(&nulls),
                important_median: median(&imps),
            }
        })
        .collect();
    Ok(StabilityReport {
        config: config.clone(),
        seed: rng.root_seed(),
        medians,
        rows,
    })
}

impl StabilityReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(io_error)
    }
}

// ---------------------------------------------------------------------------
// Distance between the two loss samples of a null feature

/// `W1` between `{l(m(X'_1,i), y_i)}` and `{l(m(X'_2,i), y_i)}` for
/// `feature` (default: the first null feature) on a fresh simulation with
/// ridge imputers.
pub fn null_loss_wasserstein(
    setting: &SyntheticSetting,
    model: &ModelSpec,
    lambda: f64,
    feature: Option<usize>,
    rng: &RngStream,
) -> Result<f64> {
    let sim = simulate(setting, &rng.derive(0))?;
    let feature = match feature {
        Some(j) => j,
        None => *sim
            .truth
            .null_indices()
            .first()
            .ok_or_else(|| Error::InvalidParameter("setting has no null feature".into()))?,
    };
    if sim.truth.important.get(feature) != Some(&false) {
        return Err(Error::InvalidParameter(format!(
            "feature {feature} is not null"
        )));
    }
    let m = model.fit(&sim.data, &rng.derive(1))?;
    let pools = ResidualPools::from(&fit_imputer_pair(&sim.data, feature, lambda)?);
    let draw = draw_from_pools(&sim.data, &pools, &rng.derive(2))?;
    let loss = LossFunction::SquaredError;
    let a = evaluate_loss(&m, loss, &draw.inputs_one, sim.data.response())?;
    let b = evaluate_loss(&m, loss, &draw.inputs_two, sim.data.response())?;
    wasserstein_1d(&a, &b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinRow {
    pub n: usize,
    pub median: f64,
    pub values: Vec<f64>,
}

/// [`null_loss_wasserstein`] over `seeds` seeds at each sample size.
pub fn wasserstein_experiment(
    setting: &SyntheticSetting,
    sample_sizes: &[usize],
    seeds: usize,
    model: &ModelSpec,
    lambda: f64,
    rng: &RngStream,
    workers: Option<usize>,
) -> Result<Vec<WassersteinRow>> {
    let jobs: Vec<(usize, usize)> = sample_sizes
        .iter()
        .flat_map(|&n| (0..seeds).map(move |s| (n, s)))
        .collect();
    let values: Vec<f64> = crate::in_pool(workers, || {
        jobs.par_iter()
            .map(|&(n, s)| {
                let mut st = setting.clone();
                st.n = n;
                null_loss_wasserstein(
                    &st,
                    model,
                    lambda,
                    None,
                    &rng.derive(n as u64).derive(s as u64),
                )
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(sample_sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let v = values[k * seeds..(k + 1) * seeds].to_vec();
            WassersteinRow {
                n,
                median: median(&v),
                values: v,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Statistic snapshot

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub feature: usize,
    pub statistic: f64,
    pub is_null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeabilitySnapshot {
    pub rows: Vec<SnapshotRow>,
    /// Knockoff threshold at `q`; `None` when nothing qualifies.
    pub threshold: Option<f64>,
}

/// Per-feature statistics of one simulated run with ridge imputers,
/// labelled by truth, with the knockoff threshold.
pub fn exchangeability_snapshot(
    setting: &SyntheticSetting,
    model: &ModelSpec,
    lambda: f64,
    q: f64,
    rng: &RngStream,
) -> Result<ExchangeabilitySnapshot> {
    exchangeability_snapshot_with(setting, model, ImputerChoice::Ridge { lambda }, q, rng)
}

/// [`exchangeability_snapshot`] with a choice of imputer.
pub fn exchangeability_snapshot_with(
    setting: &SyntheticSetting,
    model: &ModelSpec,
    imputer: ImputerChoice,
    q: f64,
    rng: &RngStream,
) -> Result<ExchangeabilitySnapshot> {
    let sim = simulate(setting, &rng.derive(0))?;
    let mut config = MethodConfig::new(Method::KnockoffThreshold, q);
    config.model = model.clone();
    config.imputer = imputer;
    config.loss = Some(LossFunction::SquaredError);
    let report = run_on(&sim, &config, rng)?;
    Ok(ExchangeabilitySnapshot {
        rows: report
            .decisions
            .iter()
            .map(|d| SnapshotRow {
                feature: d.feature_index,
                statistic: d.statistic,
                is_null: !sim.truth.important[d.feature_index],
            })
            .collect(),
        threshold: report.threshold.filter(|t| t.is_finite()),
    })
}

impl ExchangeabilitySnapshot {
    /// `feature,statistic,is_null,threshold`; the threshold is blank when
    /// infinite.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["feature", "statistic", "is_null", "threshold"])?;
        let t = self.threshold.map(|t| t.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.feature.to_string(),
                r.statistic.to_string(),
                r.is_null.to_string(),
                t.clone(),
            ])?;
        }
        w.flush().map_err(io_error)
    }
}

// ---------------------------------------------------------------------------
// Injected correlated null

fn standardize(values: &mut [f64]) -> Option<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 0.0) {
        return None;
    }
    for v in values.iter_mut() {
        *v = (*v - mean) / sd;
    }
    Some(())
}

/// Appends a column `c * z(mean of z(columns)) + sqrt(1 - c^2) * noise`,
/// standardized, where `z` standardizes. It depends on `y` only through
/// the other inputs, so it is a null feature by construction. Returns the
/// augmented dataset and the new column's index.
pub fn inject_correlated_null(
    data: &TabularDataset,
    target_correlation: f64,
    rng: &RngStream,
) -> Result<(TabularDataset, usize)> {
    let c = target_correlation;
    if !(c.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target correlation must lie in (-1, 1), got {c}"
        )));
    }
    let (n, p) = (data.n(), data.p());
    let mut composite = vec![0.0; n];
    for j in 0..p {
        let mut col = data.column(j);
        standardize(&mut col).ok_or_else(|| {
            Error::InvalidData(format!(
                "column {} is constant and cannot be standardized",
                data.column_name(j)
                    .map(str::to_owned)
                    .unwrap_or_else(|| j.to_string())
            ))
        })?;
        for (acc, v) in composite.iter_mut().zip(col) {
            *acc += v / p as f64;
        }
    }
    standardize(&mut composite)
        .ok_or_else(|| Error::InvalidData("columns average to a constant".into()))?;
    let mut gen = rng.rng();
    let mut column: Vec<f64> = composite
        .iter()
        .map(|&m| {
            let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut gen);
            c * m + (1.0 - c * c).sqrt() * e
        })
        .collect();
    standardize(&mut column)
        .ok_or_else(|| Error::InvalidData("injected column is constant".into()))?;
    let name = data.column_names().map(|_| "injected_null");
    Ok((data.with_appended_column(&column, name)?, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub target_correlation: f64,
    pub alpha: f64,
    pub permutations: usize,
    pub lambda: f64,
    pub model: ModelSpec,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRun {
    pub seed: usize,
    pub injected_p_value: f64,
    pub injected_rejected: bool,
    /// Original features rejected at `alpha`.
    pub discoveries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub config: InjectionConfig,
    pub seed: u64,
    pub rejection_rate: f64,
    pub mean_discoveries: f64,
    pub runs: Vec<InjectionRun>,
}

/// Repeats injection, model fit and per-feature Wilcoxon tests on a fixed
/// dataset; seed `s` uses `rng.derive(s)`.
pub fn null_injection_experiment(
    data: &TabularDataset,
    config: &InjectionConfig,
    rng: &RngStream,
    workers: Option<usize>,
) -> Result<InjectionReport> {
    if config.seeds == 0 {
        return Err(Error::InvalidParameter("seeds must be at least 1".into()));
    }
    let loss = match data.task_kind() {
        TaskKind::Regression => LossFunction::SquaredError,
        TaskKind::BinaryClassification => LossFunction::cross_entropy(),
    };
    let one = |s: usize| -> Result<InjectionRun> {
        let stream = rng.derive(s as u64);
        let (augmented, injected) =
            inject_correlated_null(data, config.target_correlation, &stream.derive(0))?;
        let m = config.model.fit(&augmented, &stream.derive(1))?;
        let mut run = RunConfig::new(
            Method::Wilcoxon,
            config.alpha,
            Imputation::Ridge {
                lambda: config.lambda,
            },
        );
        run.permutations = config.permutations;
        run.workers = Some(1);
        let report = run_semi_knockoffs(&augmented, &m, loss, &run, &stream.derive(2))?;
        let inj = &report.decisions[injected];
        Ok(InjectionRun {
            seed: s,
            injected_p_value: inj.p_value.unwrap_or(1.0),
            injected_rejected: inj.selected,
            discoveries: report
                .decisions
                .iter()
                .filter(|d| d.selected && d.feature_index != injected)
                .count(),
        })
    };
    let runs: Vec<InjectionRun> = crate::in_pool(workers, || {
        (0..config.seeds)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()
    })??;
    let k = runs.len() as f64;
    Ok(InjectionReport {
        config: config.clone(),
        seed: rng.root_seed(),
        rejection_rate: runs.iter().filter(|r| r.injected_rejected).count() as f64 / k,
        mean_discoveries: runs.iter().map(|r| r.discoveries as f64).sum::<f64>() / k,
        runs,
    })
}

/// Averaged paired losses for one feature with ridge imputers; a thin
/// convenience for callers that only need the sample.
pub fn feature_losses(
    data: &TabularDataset,
    model: &dyn semiknock_core::PredictiveModel,
    loss: LossFunction,
    feature: usize,
    lambda: f64,
    permutations: usize,
    rng: &RngStream,
) -> Result<semiknock_core::PairedLossSample> {
    let pools = ResidualPools::from(&fit_imputer_pair(data, feature, lambda)?);
    feature_paired_losses(data, model, loss, &pools, permutations, rng)
}
