//! Paired comparison of two run records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::{RunRecord, SeriesPoint};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ExcessLoss,
    Accuracy,
}

impl Metric {
    fn final_value(self, r: &RunRecord) -> Option<f64> {
        match self {
            Metric::ExcessLoss => r.final_excess_loss,
            Metric::Accuracy => r.final_accuracy,
        }
    }

    fn point_value(self, p: &SeriesPoint) -> Option<f64> {
        match self {
            Metric::ExcessLoss => Some(p.excess_loss),
            Metric::Accuracy => p.accuracy,
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "excess_loss" | "excess-loss" => Ok(Metric::ExcessLoss),
            "accuracy" => Ok(Metric::Accuracy),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric `{other}`; expected excess_loss or accuracy"
            ))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::ExcessLoss => "excess_loss",
            Metric::Accuracy => "accuracy",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedPoint {
    pub t: usize,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: Metric,
    pub a: String,
    pub b: String,
    pub a_final: f64,
    pub b_final: f64,
    /// `b_final / a_final`; exactly 1 when the values are equal, `None` when
    /// the quotient is not finite.
    pub ratio: Option<f64>,
    /// `b_final - a_final`.
    pub difference: f64,
    /// Union of both sample grids; a side is `None` where it has no sample.
    pub series: Vec<AlignedPoint>,
}

pub fn compare(a: &RunRecord, b: &RunRecord, metric: Metric) -> Result<Comparison> {
    if a.iterations != b.iterations {
        return Err(Error::InvalidComparison(format!(
            "records have different horizons: {} vs {}",
            a.iterations, b.iterations
        )));
    }
    if a.problem_hash != b.problem_hash {
        return Err(Error::InvalidComparison(
            "records were produced on different problems".into(),
        ));
    }
    let get = |r: &RunRecord| {
        metric.final_value(r).ok_or_else(|| {
            Error::InvalidComparison(format!("record `{}` has no final {metric}", r.label))
        })
    };
    let (fa, fb) = (get(a)?, get(b)?);
    let ratio = if fa == fb { 1.0 } else { fb / fa };

    let mut grid: BTreeMap<usize, AlignedPoint> = BTreeMap::new();
    for (side, rec) in [(0, a), (1, b)] {
        for p in &rec.series {
            let e = grid.entry(p.t).or_insert(AlignedPoint { t: p.t, a: None, b: None });
            let v = metric.point_value(p);
            if side == 0 {
                e.a = v;
            } else {
                e.b = v;
            }
        }
    }
    Ok(Comparison {
        metric,
        a: a.label.clone(),
        b: b.label.clone(),
        a_final: fa,
        b_final: fb,
        ratio: ratio.is_finite().then_some(ratio),
        difference: fb - fa,
        series: grid.into_values().collect(),
    })
}
