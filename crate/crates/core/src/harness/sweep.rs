//! Grid sweeps over learning rates, constant delays and seeds.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DelayConfig, ExperimentConfig, SweepConfig};
use super::record::{write_json, RunRecord};
use super::runner::{reference_optimum, run_built, RunOptions};
use crate::error::{Error, Result};

/// Axis values of one sweep point; `None` where the axis is not swept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub learning_rate: Option<f64>,
    pub delay: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    #[serde(flatten)]
    pub point: SweepPoint,
    pub valid: bool,
    pub final_excess_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub base_config_hash: String,
    pub axes: SweepConfig,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub summary: SweepSummary,
    pub records: Vec<RunRecord>,
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

/// Expands the sweep axes into per-point configurations, sorted by
/// (learning rate, delay, seed). Point configs carry no sweep section, so a
/// point is identical to a plain run of the same settings.
pub fn expand(cfg: &ExperimentConfig) -> Result<Vec<(SweepPoint, ExperimentConfig)>> {
    if cfg.sweep.is_empty() {
        return Err(Error::config("sweep", "at least one sweep axis must be nonempty"));
    }
    let mut points = Vec::new();
    for lr in axis(&cfg.sweep.learning_rates) {
        for delay in axis(&cfg.sweep.delays) {
            for seed in axis(&cfg.sweep.seeds) {
                let mut c = cfg.clone();
                c.sweep = SweepConfig::default();
                if let Some(lr) = lr {
                    c.algorithm = c.algorithm.with_learning_rate(lr)?;
                }
                if let Some(tau) = delay {
                    c.delay = DelayConfig::Constant { tau };
                }
                if let Some(seed) = seed {
                    c.seed = seed;
                }
                c.validate()?;
                points.push((
                    SweepPoint {
                        learning_rate: lr,
                        delay,
                        seed,
                    },
                    c,
                ));
            }
        }
    }
    points.sort_by(|(a, _), (b, _)| {
        let lr = |p: &SweepPoint| p.learning_rate.unwrap_or(0.0);
        lr(a).total_cmp(&lr(b)).then(a.delay.cmp(&b.delay)).then(a.seed.cmp(&b.seed))
    });
    points.dedup_by(|a, b| a.0 == b.0);
    Ok(points)
}

/// Runs every sweep point on a pool of `jobs` threads. Every point uses run
/// index 0 of its seed, so points that differ only in learning rate or delay
/// see the same noise stream.
pub fn run_sweep(cfg: &ExperimentConfig, base_dir: &Path, jobs: usize, audit: bool) -> Result<SweepResult> {
    let points = expand(cfg)?;
    let built = cfg.build(base_dir)?;
    let optimum = reference_optimum(cfg, &built)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let records = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, (_, c))| {
                let opts = RunOptions {
                    label: format!("sweep-{i:03}"),
                    audit,
                    timing: false,
                };
                run_built(c, &built, &optimum, &opts)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let rows = points
        .iter()
        .zip(&records)
        .map(|((p, _), r)| SweepRow {
            label: r.label.clone(),
            point: p.clone(),
            valid: r.valid,
            final_excess_loss: r.final_excess_loss,
            final_accuracy: r.final_accuracy,
            config_hash: r.config_hash.clone(),
        })
        .collect();
    Ok(SweepResult {
        summary: SweepSummary {
            base_config_hash: cfg.hash(),
            axes: cfg.sweep.clone(),
            rows,
        },
        records,
    })
}

impl SweepResult {
    /// Writes each run's CSV and JSON plus `sweep-summary.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for r in &self.records {
            let (c, j) = r.write(dir)?;
            paths.push(c);
            paths.push(j);
        }
        let summary = dir.join("sweep-summary.json");
        write_json(&summary, &self.summary)?;
        paths.push(summary);
        Ok(paths)
    }
}
