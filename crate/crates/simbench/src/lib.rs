//! Simulation settings, metrics and replicated experiments.

pub mod dr;
pub mod experiment;
pub mod metrics;
pub mod probes;
pub mod settings;

pub use dr::{double_robustness_probe, DrProbe, NonlinearOracle};
pub use experiment::{run_replicated, ExperimentReport, ImputerChoice, MethodConfig};
pub use metrics::{
    auc_from_scores, metrics, metrics_from_selection, wasserstein_1d, SelectionMetrics,
};
pub use probes::{
    exchangeability_snapshot, exchangeability_snapshot_with, inject_correlated_null,
    null_injection_experiment, null_loss_wasserstein, stability_experiment, wasserstein_experiment,
};
pub use settings::{generate, simulate, GroundTruth, SettingKind, Simulated, SyntheticSetting};

use semiknock_core::{Error, Result};

/// Runs `job` on a pool of `workers` threads, or on the ambient rayon pool
/// when `workers` is `None`.
pub(crate) fn in_pool<T: Send>(
    workers: Option<usize>,
    job: impl FnOnce() -> T + Send,
) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(0) => Err(Error::InvalidParameter("workers must be at least 1".into())),
        Some(w) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {w} workers: {e}")))?
            .install(job)),
    }
}
