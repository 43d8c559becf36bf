use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use semiknock_core::models::ModelSpec;
use semiknock_core::{
    load_dataset, run_semi_knockoffs, DataFormat, Error, Imputation, LossFunction, Method, Result,
    RngStream, RunConfig, SelectionReport, TabularDataset, TaskKind,
};
use semiknock_simbench::probes::{InjectionConfig, StabilityConfig};
use semiknock_simbench::{
    double_robustness_probe, inject_correlated_null, null_injection_experiment, run_replicated,
    stability_experiment, ImputerChoice, MethodConfig, SettingKind, SyntheticSetting,
};

use crate::args::{
    Command, Common, DataOpts, DrCheckArgs, ImputerArg, InjectNullArgs, LossArg, OutputFormat,
    SelectArgs, SettingOpts, SimulateArgs, StabilityArgs, TestArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Select(a) => select(a),
        Command::Test(a) => test(a),
        Command::Simulate(a) => simulate(a),
        Command::Stability(a) => stability(a),
        Command::DrCheck(a) => dr_check(a),
        Command::InjectNull(a) => inject_null(a),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidData(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Sidecar holding the config of a CSV output: `<output>.json`.
fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Writes the primary output and prints `summary` where it does not mix
/// with the report: stdout when the report goes to a file, stderr
/// otherwise.
fn emit<C: Serialize>(
    common: &Common,
    json: impl FnOnce() -> Result<String>,
    csv: impl FnOnce(&mut Vec<u8>) -> Result<()>,
    config: &C,
    summary: &str,
) -> Result<()> {
    let bytes = match common.format {
        OutputFormat::Json => json()?.into_bytes(),
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            csv(&mut buf)?;
            buf
        }
    };
    match &common.output {
        Some(path) => {
            write_file(path, &bytes)?;
            if common.format == OutputFormat::Csv {
                write_file(&sidecar_path(path), to_json(config)?.as_bytes())?;
            }
            println!("{summary}");
        }
        None => {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| io_error(Path::new("<stdout>"), e))?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn default_loss(task: TaskKind, chosen: Option<LossArg>) -> LossFunction {
    chosen.map(LossFunction::from).unwrap_or(match task {
        TaskKind::Regression => LossFunction::SquaredError,
        TaskKind::BinaryClassification => LossFunction::cross_entropy(),
    })
}

fn load(opts: &DataOpts) -> Result<TabularDataset> {
    load_dataset(&opts.data, &opts.target, DataFormat::CsvWithHeader)
}

/// Resolved configuration of a run on a CSV dataset. Worker count is
/// left out on purpose: it never changes results.
#[derive(Debug, Serialize)]
struct DatasetRunConfig {
    command: &'static str,
    data: PathBuf,
    target: String,
    n: usize,
    p: usize,
    task: TaskKind,
    model: ModelSpec,
    loss: LossFunction,
    imputer_lambda: f64,
    method: Method,
    level: f64,
    permutations: usize,
    features: Option<Vec<usize>>,
    seed: u64,
}

struct DatasetRun<'a> {
    command: &'static str,
    data: &'a DataOpts,
    model: ModelSpec,
    loss: Option<LossArg>,
    lambda: f64,
    method: Method,
    level: f64,
    permutations: u64,
    features: Option<Vec<usize>>,
    common: &'a Common,
}

fn run_on_dataset(run: DatasetRun<'_>) -> Result<(SelectionReport, DatasetRunConfig)> {
    let data = load(run.data)?;
    let loss = default_loss(data.task_kind(), run.loss);
    let root = RngStream::new(run.common.seed);
    let model = run.model.fit(&data, &root.derive(1))?;
    let mut config = RunConfig::new(
        run.method,
        run.level,
        Imputation::Ridge { lambda: run.lambda },
    );
    config.permutations = run.permutations as usize;
    config.features = run.features.clone();
    config.workers = run.common.workers();
    let report = run_semi_knockoffs(&data, &model, loss, &config, &root.derive(2))?;
    let echo = DatasetRunConfig {
        command: run.command,
        data: run.data.data.clone(),
        target: run.data.target.clone(),
        n: data.n(),
        p: data.p(),
        task: data.task_kind(),
        model: run.model,
        loss,
        imputer_lambda: run.lambda,
        method: run.method,
        level: run.level,
        permutations: run.permutations as usize,
        features: run.features,
        seed: run.common.seed,
    };
    Ok((report, echo))
}

fn emit_report(
    report: &SelectionReport,
    echo: &DatasetRunConfig,
    common: &Common,
    summary: &str,
) -> Result<()> {
    emit(
        common,
        || report.to_json(Some(echo)),
        |buf| report.write_csv(buf),
        echo,
        summary,
    )
}

fn select(a: SelectArgs) -> Result<()> {
    let (report, echo) = run_on_dataset(DatasetRun {
        command: "select",
        data: &a.data,
        model: a.model.spec(),
        loss: a.loss,
        lambda: a.lambda,
        method: a.method.into(),
        level: a.q,
        permutations: a.permutations,
        features: None,
        common: &a.common,
    })?;
    let selected = report.selected_indices();
    let threshold = match report.threshold {
        Some(t) if t.is_finite() => format!("threshold {t}"),
        Some(_) => "no threshold".to_string(),
        None => format!("BH at q = {}", report.level),
    };
    let summary = format!(
        "selected {} of {} features ({threshold}){}",
        selected.len(),
        report.decisions.len(),
        if selected.is_empty() {
            String::new()
        } else {
            format!(": {selected:?}")
        }
    );
    emit_report(&report, &echo, &a.common, &summary)
}

fn test(a: TestArgs) -> Result<()> {
    let features = (!a.feature.is_empty()).then(|| a.feature.clone());
    let (report, echo) = run_on_dataset(DatasetRun {
        command: "test",
        data: &a.data,
        model: a.model.spec(),
        loss: a.loss,
        lambda: a.lambda,
        method: a.method.into(),
        level: a.alpha,
        permutations: a.permutations,
        features,
        common: &a.common,
    })?;
    let summary = format!(
        "{} of {} features with p <= {}",
        report.selected_indices().len(),
        report.decisions.len(),
        a.alpha
    );
    emit_report(&report, &echo, &a.common, &summary)
}

fn setting_from(
    opts: &SettingOpts,
    default: SettingKind,
    n: Option<usize>,
) -> Result<SyntheticSetting> {
    let mut s = SyntheticSetting::new(opts.setting.map_or(default, SettingKind::from));
    if let Some(n) = n {
        s.n = n;
    }
    if let Some(p) = opts.p {
        s.p = p;
    }
    if let Some(rho) = opts.rho {
        s.correlation_rho = rho;
    }
    if let Some(sp) = opts.sparsity {
        s.sparsity = sp;
    }
    s.validate()?;
    Ok(s)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let setting = setting_from(&a.setting, SettingKind::AdjacentSupport, a.n)?;
    let config = MethodConfig {
        method: a.method.into(),
        level: a.q,
        permutations: a.permutations as usize,
        imputer: match a.imputer {
            ImputerArg::Ridge => ImputerChoice::Ridge { lambda: a.lambda },
            ImputerArg::Oracle => ImputerChoice::Oracle,
        },
        model: a.model.spec(),
        loss: None,
    };
    let report = run_replicated(
        &setting,
        &config,
        a.reps as usize,
        &RngStream::new(a.common.seed),
        a.common.workers(),
    )?;
    let auc = report
        .auc
        .map(|v| format!(", AUC {v:.3}"))
        .unwrap_or_default();
    let summary = format!(
        "{} replicates of {}: FDR {:.3}, power {:.3}, type-I {:.3}{auc} ({:.1}s)",
        report.replicate_count,
        setting.kind,
        report.fdr,
        report.power,
        report.type_i_error,
        report.runtime_secs
    );
    emit(
        &a.common,
        || to_json(&report),
        |buf| report.write_csv(buf),
        &report.config,
        &summary,
    )
}

fn stability(a: StabilityArgs) -> Result<()> {
    let setting = setting_from(
        &a.setting,
        SettingKind::StabilityBlocks,
        a.n.first().copied(),
    )?;
    let config = StabilityConfig {
        setting,
        sample_sizes: a.n.clone(),
        seeds: a.reps as usize,
        penalty: a.penalty,
    };
    let report = stability_experiment(&config, &RngStream::new(a.common.seed), a.common.workers())?;
    let mut summary = String::from("median coefficient movement (null / important):");
    for m in &report.medians {
        summary.push_str(&format!(
            "\n  n = {}: {:.4} / {:.4}",
            m.n, m.null_median, m.important_median
        ));
    }
    #[derive(Serialize)]
    struct Meta<'a> {
        config: &'a StabilityConfig,
        seed: u64,
    }
    let meta = Meta {
        config: &config,
        seed: a.common.seed,
    };
    emit(
        &a.common,
        || to_json(&report),
        |buf| report.write_csv(buf),
        &meta,
        &summary,
    )
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn dr_check(a: DrCheckArgs) -> Result<()> {
    let setting = SyntheticSetting::new(SettingKind::DrNonlinear).with_size(a.n, a.p);
    setting.validate()?;
    let model = a.model.spec();
    let probe =
        double_robustness_probe(&setting, &model, a.lambda, &RngStream::new(a.common.seed))?;

    #[derive(Serialize)]
    struct DrConfig {
        setting: SyntheticSetting,
        model: ModelSpec,
        imputer_lambda: f64,
        feature: usize,
        seed: u64,
    }
    #[derive(Serialize)]
    struct DrSummary {
        mean_estimated_vs_estimated: f64,
        std_estimated_vs_estimated: f64,
        std_estimated_vs_oracle: f64,
        std_ratio: f64,
    }
    #[derive(Serialize)]
    struct DrOutput<'a> {
        config: &'a DrConfig,
        summary: DrSummary,
        estimated_vs_estimated: &'a [f64],
        estimated_vs_oracle: &'a [f64],
    }
    let config = DrConfig {
        setting,
        model,
        imputer_lambda: a.lambda,
        feature: 0,
        seed: a.common.seed,
    };
    let blue = &probe.estimated_vs_estimated;
    let orange = &probe.estimated_vs_oracle;
    let summary = DrSummary {
        mean_estimated_vs_estimated: blue.iter().sum::<f64>() / blue.len() as f64,
        std_estimated_vs_estimated: std_dev(blue),
        std_estimated_vs_oracle: std_dev(orange),
        std_ratio: std_dev(orange) / std_dev(blue),
    };
    let line = format!(
        "std estimated-vs-estimated {:.4}, estimated-vs-oracle {:.4} (ratio {:.3})",
        summary.std_estimated_vs_estimated, summary.std_estimated_vs_oracle, summary.std_ratio
    );
    let output = DrOutput {
        config: &config,
        summary,
        estimated_vs_estimated: blue,
        estimated_vs_oracle: orange,
    };
    emit(
        &a.common,
        || to_json(&output),
        |buf| probe.write_csv(buf),
        &config,
        &line,
    )
}

pub const INJECTED_COLUMN: &str = "injected_null";

fn inject_null(a: InjectNullArgs) -> Result<()> {
    let data = load(&a.data)?;
    let root = RngStream::new(a.seed);
    let (augmented, injected_index) = inject_correlated_null(&data, a.corr, &root.derive(0))?;

    // Copy the source records verbatim so labels and formatting survive.
    let path = &a.data.data;
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        other => Error::InvalidData(format!("{other:?}")),
    })?;
    let mut header = reader.headers()?.clone();
    if header.iter().any(|h| h == INJECTED_COLUMN) {
        return Err(Error::InvalidData(format!(
            "{} already has a column `{INJECTED_COLUMN}`",
            path.display()
        )));
    }
    let column = augmented.column(injected_index);
    let mut writer = csv::Writer::from_writer(Vec::new());
    header.push_field(INJECTED_COLUMN);
    writer.write_record(&header)?;
    let mut rows = 0;
    for (record, value) in reader.records().zip(&column) {
        let mut record = record?;
        record.push_field(&value.to_string());
        writer.write_record(&record)?;
        rows += 1;
    }
    if rows != column.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {rows} records but {} were loaded",
            path.display(),
            column.len()
        )));
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidData(e.to_string()))?;

    let experiment = match a.reps {
        Some(reps) => Some(null_injection_experiment(
            &data,
            &InjectionConfig {
                target_correlation: a.corr,
                alpha: a.alpha,
                permutations: a.permutations as usize,
                lambda: a.lambda,
                model: a.model.spec(),
                seeds: reps as usize,
            },
            &root.derive(1),
            a.workers.map(|w| w as usize),
        )?),
        None => None,
    };

    #[derive(Serialize)]
    struct Sidecar<'a> {
        source: &'a Path,
        target: &'a str,
        output: &'a Path,
        target_correlation: f64,
        seed: u64,
        injected_index: usize,
        injected_column: &'static str,
        csv_column_index: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        experiment: Option<semiknock_simbench::probes::InjectionReport>,
    }
    let sidecar = Sidecar {
        source: path,
        target: &a.data.target,
        output: &a.output,
        target_correlation: a.corr,
        seed: a.seed,
        injected_index,
        injected_column: INJECTED_COLUMN,
        csv_column_index: header.len() - 1,
        experiment,
    };
    write_file(&a.output, &bytes)?;
    write_file(&sidecar_path(&a.output), to_json(&sidecar)?.as_bytes())?;
    print!("injected `{INJECTED_COLUMN}` as feature {injected_index}");
    match &sidecar.experiment {
        Some(r) => println!(
            "; rejected in {:.1}% of {} seeds at alpha = {}",
            100.0 * r.rejection_rate,
            r.runs.len(),
            a.alpha
        ),
        None => println!(),
    }
    Ok(())
}
