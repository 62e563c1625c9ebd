//! Run records and their on-disk form: one CSV series plus one JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::delay::DelayStats;
use crate::error::{Error, Result};

/// One sampled row of a run. Column names are part of the output contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: usize,
    pub excess_loss: f64,
    /// Held-out accuracy; empty for problems without a dataset.
    pub accuracy: Option<f64>,
    /// Step applied to the delivered gradient, `alpha_t eta_t`.
    pub eta: f64,
    /// Delay of the gradient delivered at step `t`.
    pub tau: usize,
}

/// Norms of the delivered gradients, over fresh deliveries only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimates {
    pub count: usize,
    pub max_norm: f64,
    pub mean_sq_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
            key: match e {
                Error::InvalidConfiguration { key, .. } => Some(key.clone()),
                _ => None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub algorithm: String,
    pub iterations: usize,
    pub steps_completed: usize,
    /// False when the run stopped early; `error` says why.
    pub valid: bool,
    #[serde(default)]
    pub error: Option<ErrorReport>,
    /// `None` when the final value is not finite.
    pub final_excess_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub optimum_value: f64,
    pub delay_stats: Option<DelayStats>,
    pub fresh_deliveries: usize,
    pub gradient_estimates: GradientEstimates,
    /// Final output point: the last iterate or the weighted average.
    pub output: Vec<f64>,
    pub config_hash: String,
    pub problem_hash: String,
    pub rng: String,
    /// Only present when timing was requested, so records stay reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub series: Vec<SeriesPoint>,
}

impl RunRecord {
    /// Writes `<dir>/<label>.csv` and `<dir>/<label>.json`, returning both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{}.csv", self.label));
        let json_path = dir.join(format!("{}.json", self.label));
        write_series(&csv_path, &self.series)?;
        write_json(&json_path, self)?;
        Ok((csv_path, json_path))
    }

    /// Reads a JSON summary and the series CSV next to it, if present.
    pub fn load(json_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let mut rec: RunRecord = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedInput {
                location: json_path.display().to_string(),
                message: e.to_string(),
            })?;
        let csv_path = json_path.with_extension("csv");
        if csv_path.exists() {
            rec.series = read_series(&csv_path)?;
        }
        Ok(rec)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_series(path: &Path, series: &[SeriesPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if series.is_empty() {
        w.write_record(["t", "excess_loss", "accuracy", "eta", "tau"])
            .map_err(|e| csv_error(path, e))?;
    }
    for p in series {
        w.serialize(p).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_series(path: &Path) -> Result<Vec<SeriesPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<SeriesPoint>, _>>()
        .map_err(|e| Error::MalformedInput {
            location: path.display().to_string(),
            message: e.to_string(),
        })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::MalformedInput {
            location: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
