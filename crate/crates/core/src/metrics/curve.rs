use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::index::SteerabilityIndex;
use super::MetricsError;
use crate::persona::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerabilityCurve {
    pub dimension: String,
    pub direction: Direction,
    pub points: Vec<CurvePoint>,
}

impl SteerabilityCurve {
    pub fn at(&self, k: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.k == k)
    }
}

/// Sample mean and standard deviation (zero for a single value).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summarizes per-trial indices of one (dimension, direction) into a curve
/// over `k_schedule`.
///
/// Every `(k, trial)` cell for `trials` must be present unless
/// `gap_tolerant` is set, in which case missing cells are skipped and a `k`
/// with no cells at all is dropped from the curve.
pub fn build_curve(
    dimension: &str,
    direction: Direction,
    indices: &[SteerabilityIndex],
    k_schedule: &[usize],
    trials: usize,
    gap_tolerant: bool,
) -> Result<SteerabilityCurve, MetricsError> {
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for idx in indices {
        if idx.dimension == dimension && idx.direction == direction {
            cells.insert((idx.budget_k, idx.trial), idx.value);
        }
    }
    let mut schedule = k_schedule.to_vec();
    schedule.sort_unstable();
    schedule.dedup();

    let mut missing = Vec::new();
    let mut points = Vec::new();
    for &k in &schedule {
        let mut values = Vec::with_capacity(trials);
        for t in 0..trials {
            match cells.get(&(k, t)) {
                Some(v) => values.push(*v),
                None => missing.push((k, t)),
            }
        }
        if !values.is_empty() {
            let (mean, std) = mean_std(&values);
            points.push(CurvePoint {
                k,
                mean,
                std,
                n_trials: values.len(),
            });
        }
    }
    if !missing.is_empty() && !gap_tolerant {
        return Err(MetricsError::MissingCells {
            dimension: dimension.to_owned(),
            direction,
            cells: missing,
        });
    }
    Ok(SteerabilityCurve {
        dimension: dimension.to_owned(),
        direction,
        points,
    })
}
