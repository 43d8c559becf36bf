use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use semiknock_core::models::ModelSpec;
use semiknock_core::{LossFunction, Method};
use semiknock_simbench::SettingKind;

#[derive(Debug, Parser)]
#[command(
    name = "semiknock",
    version,
    about = "Conditional independence tests and FDR-controlled selection with semi-knockoffs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select features with FDR control on a CSV dataset.
    Select(SelectArgs),
    /// Per-feature conditional independence p-values on a CSV dataset.
    Test(TestArgs),
    /// Replicated selection experiment on a synthetic setting.
    Simulate(SimulateArgs),
    /// Ridge coefficient movement when a feature is dropped, across n.
    Stability(StabilityArgs),
    /// Loss-difference distributions with estimated and true imputers.
    DrCheck(DrCheckArgs),
    /// Append a correlated null column to a CSV dataset.
    InjectNull(InjectNullArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Squared,
    CrossEntropy,
}

impl From<LossArg> for LossFunction {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Squared => LossFunction::SquaredError,
            LossArg::CrossEntropy => LossFunction::cross_entropy(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectMethod {
    #[value(name = "knockoff", alias = "knockoff_threshold")]
    Knockoff,
    #[value(name = "bh", alias = "bh_on_wilcoxon")]
    Bh,
}

impl From<SelectMethod> for Method {
    fn from(m: SelectMethod) -> Self {
        match m {
            SelectMethod::Knockoff => Method::KnockoffThreshold,
            SelectMethod::Bh => Method::BhOnWilcoxon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestMethod {
    Wilcoxon,
    #[value(name = "sign_test", alias = "sign")]
    SignTest,
}

impl From<TestMethod> for Method {
    fn from(m: TestMethod) -> Self {
        match m {
            TestMethod::Wilcoxon => Method::Wilcoxon,
            TestMethod::SignTest => Method::SignTest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnyMethod {
    #[value(name = "knockoff", alias = "knockoff_threshold")]
    Knockoff,
    #[value(name = "bh", alias = "bh_on_wilcoxon")]
    Bh,
    Wilcoxon,
    #[value(name = "sign_test", alias = "sign")]
    SignTest,
}

impl From<AnyMethod> for Method {
    fn from(m: AnyMethod) -> Self {
        match m {
            AnyMethod::Knockoff => Method::KnockoffThreshold,
            AnyMethod::Bh => Method::BhOnWilcoxon,
            AnyMethod::Wilcoxon => Method::Wilcoxon,
            AnyMethod::SignTest => Method::SignTest,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SettingArg {
    Adjacent,
    Masked,
    Heavy,
    Dr,
    Stability,
}

impl From<SettingArg> for SettingKind {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Adjacent => SettingKind::AdjacentSupport,
            SettingArg::Masked => SettingKind::MaskedCorrelation,
            SettingArg::Heavy => SettingKind::HeavyTails,
            SettingArg::Dr => SettingKind::DrNonlinear,
            SettingArg::Stability => SettingKind::StabilityBlocks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImputerArg {
    Ridge,
    Oracle,
}

/// `linear`, `boosted_stumps` or `external:<path>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelArg {
    Linear,
    BoostedStumps,
    External(PathBuf),
}

fn parse_model(s: &str) -> Result<ModelArg, String> {
    match s {
        "linear" => Ok(ModelArg::Linear),
        "boosted_stumps" | "stumps" => Ok(ModelArg::BoostedStumps),
        _ => match s.strip_prefix("external:") {
            Some(path) if !path.is_empty() => Ok(ModelArg::External(PathBuf::from(path))),
            _ => Err(format!(
                "expected linear, boosted_stumps or external:<path>, got `{s}`"
            )),
        },
    }
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {v}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn parse_nonnegative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {v}"))
    }
}

fn parse_correlation(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.abs() < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (-1, 1), got {v}"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed of the root random stream.
    #[arg(long, env = "SEMIKNOCK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; affects wall time only. Defaults to available parallelism.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
}

impl Common {
    pub fn workers(&self) -> Option<usize> {
        self.workers.map(|w| w as usize)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelOpts {
    /// linear, boosted_stumps, or external:<path> for a bridged model.
    #[arg(long, value_parser = parse_model, default_value = "boosted_stumps")]
    pub model: ModelArg,
    /// Ridge penalty of the linear model.
    #[arg(long, value_parser = parse_nonnegative, default_value_t = 0.1)]
    pub model_lambda: f64,
    /// Boosting rounds.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 200)]
    pub rounds: u64,
    #[arg(long, value_parser = parse_positive, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Extra argument for an external model; repeatable.
    #[arg(long = "model-arg", allow_hyphen_values = true)]
    pub model_args: Vec<String>,
    /// Per-request timeout of an external model, in seconds.
    #[arg(long, value_parser = parse_positive, default_value_t = 30.0)]
    pub bridge_timeout: f64,
}

impl ModelOpts {
    pub fn spec(&self) -> ModelSpec {
        match &self.model {
            ModelArg::Linear => ModelSpec::Linear {
                ridge_lambda: self.model_lambda,
            },
            ModelArg::BoostedStumps => ModelSpec::BoostedStumps {
                rounds: self.rounds as usize,
                learning_rate: self.learning_rate,
            },
            ModelArg::External(path) => ModelSpec::External {
                path: path.clone(),
                args: self.model_args.clone(),
                timeout_secs: self.bridge_timeout,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataOpts {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub target: String,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    /// Loss; squared for regression, cross_entropy for classification by default.
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Ridge penalty of the imputers.
    #[arg(long, value_parser = parse_nonnegative, default_value_t = 0.1)]
    pub lambda: f64,
    /// Target false discovery rate.
    #[arg(long, visible_alias = "level", value_parser = parse_level, default_value_t = 0.2)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = SelectMethod::Knockoff)]
    pub method: SelectMethod,
    /// Residual permutations averaged per feature.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub permutations: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long, value_parser = parse_nonnegative, default_value_t = 0.1)]
    pub lambda: f64,
    /// Significance level used to flag features.
    #[arg(long, visible_alias = "level", value_parser = parse_level, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = TestMethod::Wilcoxon)]
    pub method: TestMethod,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub permutations: u64,
    /// Restrict to these feature indices; repeatable or comma separated.
    #[arg(long, value_delimiter = ',')]
    pub feature: Vec<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct SettingOpts {
    /// Defaults to adjacent, or stability for the stability command.
    #[arg(long, value_enum)]
    pub setting: Option<SettingArg>,
    #[arg(long)]
    pub p: Option<usize>,
    /// AR(1) correlation of the design.
    #[arg(long, value_parser = parse_correlation)]
    pub rho: Option<f64>,
    /// Fraction of important features.
    #[arg(long)]
    pub sparsity: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub setting: SettingOpts,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 50)]
    pub reps: u64,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, value_enum, default_value_t = AnyMethod::Knockoff)]
    pub method: AnyMethod,
    /// FDR target for selection methods, significance level for tests.
    #[arg(long, visible_alias = "alpha", value_parser = parse_level, default_value_t = 0.2)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = ImputerArg::Ridge)]
    pub imputer: ImputerArg,
    #[arg(long, value_parser = parse_nonnegative, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub permutations: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub setting: SettingOpts,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "200,800,3200")]
    pub n: Vec<usize>,
    /// Seeds per sample size.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 20)]
    pub reps: u64,
    /// Penalty on the summed squared error; the ridge parameter is penalty / n.
    #[arg(long, value_parser = parse_positive, default_value_t = 1.0)]
    pub penalty: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct DrCheckArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[command(flatten)]
    pub model: ModelOpts,
    /// Ridge penalty of the estimated imputers.
    #[arg(long, value_parser = parse_nonnegative, default_value_t = 0.1)]
    pub lambda: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct InjectNullArgs {
    #[command(flatten)]
    pub data: DataOpts,
    /// Correlation of the new column with the composite of the originals.
    #[arg(long, value_parser = parse_correlation, default_value_t = 0.6)]
    pub corr: f64,
    /// Also run the rejection-rate protocol over this many seeds.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, value_parser = parse_level, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_parser = parse_nonnegative, default_value_t = 0.1)]
    pub lambda: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), default_value_t = 1)]
    pub permutations: u64,
    /// Seed of the root random stream.
    #[arg(long, env = "SEMIKNOCK_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Augmented CSV; the sidecar JSON goes next to it with a `.json` suffix.
    #[arg(long, short)]
    pub output: PathBuf,
}
