//! File formats for [`SelectionReport`].

use serde::Serialize;

use super::{Method, SelectionReport};
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct FeatureRecord {
    pub index: usize,
    pub name: Option<String>,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub selected: bool,
}

/// JSON layout of a report. The threshold is `null` (with `no_threshold`
/// set) when no candidate satisfied the knockoff condition.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReportJson<C: Serialize> {
    pub method: Method,
    pub level: f64,
    pub seed: u64,
    pub threshold: Option<f64>,
    pub no_threshold: bool,
    pub features: Vec<FeatureRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<C>,
}

impl SelectionReport {
    fn records(&self) -> Vec<FeatureRecord> {
        self.decisions
            .iter()
            .map(|d| FeatureRecord {
                index: d.feature_index,
                name: d.name.clone(),
                statistic: d.statistic,
                p_value: d.p_value,
                selected: d.selected,
            })
            .collect()
    }

    pub fn to_json_layout<C: Serialize>(&self, config: Option<C>) -> SelectionReportJson<C> {
        let infinite = self.threshold.is_some_and(|t| t.is_infinite());
        SelectionReportJson {
            method: self.method,
            level: self.level,
            seed: self.seed,
            threshold: self.threshold.filter(|t| t.is_finite()),
            no_threshold: infinite,
            features: self.records(),
            config,
        }
    }

    pub fn to_json<C: Serialize>(&self, config: Option<C>) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.to_json_layout(config))
            .map_err(|e| crate::error::Error::InvalidData(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// One row per feature: `index,name,statistic,p_value,selected`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for record in self.records() {
            w.serialize(record)?;
        }
        w.flush().map_err(|e| crate::error::Error::Io {
            path: "<csv output>".into(),
            source: e,
        })?;
        Ok(())
    }
}
