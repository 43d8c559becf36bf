//! Tabular input data and CSV ingestion.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    BinaryClassification,
}

/// An `n x p` design matrix together with its response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    inputs: DMatrix<f64>,
    response: Vec<f64>,
    column_names: Option<Vec<String>>,
    task_kind: TaskKind,
}

impl TabularDataset {
    pub fn new(inputs: DMatrix<f64>, response: Vec<f64>, task_kind: TaskKind) -> Result<Self> {
        let (n, p) = inputs.shape();
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if p == 0 {
            return Err(Error::InvalidData(
                "at least one feature is required".into(),
            ));
        }
        if response.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} responses",
                n,
                response.len()
            )));
        }
        if let Some((idx, _)) = inputs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite input at row {}, column {}",
                idx % n,
                idx / n
            )));
        }
        if let Some(i) = response.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite response at row {i}"
            )));
        }
        if task_kind == TaskKind::BinaryClassification
            && response.iter().any(|&v| v != 0.0 && v != 1.0)
        {
            return Err(Error::InvalidData(
                "binary classification responses must be 0 or 1".into(),
            ));
        }
        Ok(Self {
            inputs,
            response,
            column_names: None,
            task_kind,
        })
    }

    pub fn with_column_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "{} column names for {} features",
                names.len(),
                self.p()
            )));
        }
        self.column_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn p(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn column_name(&self, j: usize) -> Option<&str> {
        self.column_names
            .as_ref()
            .and_then(|names| names.get(j))
            .map(String::as_str)
    }

    /// Column `j` of the inputs as a plain vector.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.inputs.column(j).iter().copied().collect()
    }

    /// The inputs with column `j` removed (`X^{-j}`).
    pub fn without_column(&self, j: usize) -> DMatrix<f64> {
        self.inputs.clone().remove_column(j)
    }

    /// `X^{-j}` with the response appended as a last column.
    pub fn without_column_with_response(&self, j: usize) -> DMatrix<f64> {
        let base = self.without_column(j);
        let last = base.ncols();
        let mut out = base.insert_column(last, 0.0);
        out.set_column(last, &DVector::from_column_slice(&self.response));
        out
    }

    /// Returns a copy with `values` appended as a new last feature column.
    pub fn with_appended_column(&self, values: &[f64], name: Option<&str>) -> Result<Self> {
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} rows",
                values.len(),
                self.n()
            )));
        }
        let p = self.p();
        let mut inputs = self.inputs.clone().insert_column(p, 0.0);
        inputs.set_column(p, &DVector::from_column_slice(values));
        let mut out = Self::new(inputs, self.response.clone(), self.task_kind)?;
        if let Some(names) = &self.column_names {
            let mut names = names.clone();
            names.push(name.map_or_else(|| format!("x{p}"), str::to_owned));
            out.column_names = Some(names);
        }
        Ok(out)
    }
}

/// Supported on-disk formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataFormat {
    #[default]
    CsvWithHeader,
}

/// Loads a comma-separated file with a header row.
///
/// The target column is removed from the inputs. A target taking exactly
/// two distinct values becomes a binary classification task with labels
/// remapped to `{0, 1}` in ascending order (numeric order when every label
/// parses as a number, lexicographic otherwise). Any other numeric target is
/// a regression task.
pub fn load_dataset(
    path: &Path,
    target_column: &str,
    format: DataFormat,
) -> Result<TabularDataset> {
    match format {
        DataFormat::CsvWithHeader => {}
    }
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    read_csv(file, target_column)
}

/// Same as [`load_dataset`] but reads from any reader.
pub fn read_csv<R: std::io::Read>(reader: R, target_column: &str) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values: Vec<f64> = Vec::new();
    let mut raw_targets: Vec<String> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (i, cell) in record.iter().enumerate() {
            if i == target_idx {
                raw_targets.push(cell.to_owned());
            } else {
                let v = parse_cell(cell).ok_or_else(|| Error::NonNumeric {
                    row: row + 1,
                    column: header[i].clone(),
                    value: cell.to_owned(),
                })?;
                values.push(v);
            }
        }
    }
    let n = raw_targets.len();
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    let (response, task_kind) = encode_target(&raw_targets, target_column)?;
    let p = feature_names.len();
    if p == 0 {
        return Err(Error::InvalidData(
            "no feature columns besides the target".into(),
        ));
    }
    let inputs = DMatrix::from_row_slice(n, p, &values);
    TabularDataset::new(inputs, response, task_kind)?.with_column_names(feature_names)
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn encode_target(raw: &[String], column: &str) -> Result<(Vec<f64>, TaskKind)> {
    let numeric: Option<Vec<f64>> = raw.iter().map(|c| parse_cell(c)).collect();
    match numeric {
        Some(values) => {
            let mut distinct: Vec<f64> = values.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            match distinct.len() {
                1 => Err(Error::ConstantTarget(column.to_owned())),
                2 => {
                    let low = distinct[0];
                    let encoded = values
                        .iter()
                        .map(|&v| if v == low { 0.0 } else { 1.0 })
                        .collect();
                    Ok((encoded, TaskKind::BinaryClassification))
                }
                _ => Ok((values, TaskKind::Regression)),
            }
        }
        None => {
            let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
            match distinct.len() {
                1 => Err(Error::ConstantTarget(column.to_owned())),
                2 => {
                    let low = *distinct.iter().next().expect("two labels");
                    let encoded = raw
                        .iter()
                        .map(|v| if v == low { 0.0 } else { 1.0 })
                        .collect();
                    Ok((encoded, TaskKind::BinaryClassification))
                }
                _ => {
                    let (row, value) = raw
                        .iter()
                        .enumerate()
                        .find(|(_, c)| parse_cell(c).is_none())
                        .expect("some label failed to parse");
                    Err(Error::NonNumeric {
                        row: row + 1,
                        column: column.to_owned(),
                        value: value.clone(),
                    })
                }
            }
        }
    }
}
