use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multitask::SkyCondition;

/// Every horizon repeats the current value.
pub fn persistence_forecast(current: f64, horizons: usize) -> Vec<f64> {
    vec![current; horizons]
}

/// `(100/N) Σ |y − ŷ| / y` over samples with `y ≠ 0`, plus the number of
/// excluded samples.
pub fn mape(pred: &[f64], target: &[f64]) -> Result<(f64, usize)> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    let (mut sum, mut used) = (0.0, 0usize);
    for (p, y) in pred.iter().zip(target) {
        if *y != 0.0 {
            sum += ((y - p) / y).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Empty("samples with nonzero targets"));
    }
    Ok((100.0 * sum / used as f64, target.len() - used))
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let ss: f64 = pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// `100 (1 − RMSE / RMSE_persistence)`; zero when the two errors are equal
/// and undefined when only persistence is exact.
pub fn forecast_skill(rmse_model: f64, rmse_persistence: f64) -> Option<f64> {
    if rmse_model == rmse_persistence {
        Some(0.0)
    } else if rmse_persistence > 0.0 {
        Some(100.0 * (1.0 - rmse_model / rmse_persistence))
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    /// 1-based horizon index.
    pub horizon: usize,
    pub samples: usize,
    pub mape: f64,
    pub rmse: f64,
    pub fs: Option<f64>,
    pub persistence_mape: f64,
    pub persistence_rmse: f64,
    /// Samples left out of the MAPE because their target is zero.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub horizons: Vec<HorizonMetrics>,
    pub per_condition: BTreeMap<SkyCondition, Vec<HorizonMetrics>>,
    pub counts: BTreeMap<SkyCondition, usize>,
    pub total: usize,
}

impl MetricsReport {
    pub fn mean_mape(&self) -> f64 {
        self.horizons.iter().map(|h| h.mape).sum::<f64>() / self.horizons.len() as f64
    }
}

fn horizon_rows(pred: &[Vec<f64>], target: &[Vec<f64>], pers: &[Vec<f64>]) -> Result<Vec<HorizonMetrics>> {
    let c = target.first().map_or(0, Vec::len);
    (0..c)
        .map(|h| {
            let col = |m: &[Vec<f64>]| -> Vec<f64> { m.iter().map(|r| r[h]).collect() };
            let (p, y, q) = (col(pred), col(target), col(pers));
            let (mape_m, excluded) = mape(&p, &y)?;
            let (mape_p, _) = mape(&q, &y)?;
            let (rm, rp) = (rmse(&p, &y)?, rmse(&q, &y)?);
            Ok(HorizonMetrics {
                horizon: h + 1,
                samples: y.len(),
                mape: mape_m,
                rmse: rm,
                fs: forecast_skill(rm, rp),
                persistence_mape: mape_p,
                persistence_rmse: rp,
                excluded,
            })
        })
        .collect()
}

/// Per-horizon metrics overall and per sky condition.
pub fn evaluate(
    predictions: &[Vec<f64>],
    targets: &[Vec<f64>],
    persistence: &[Vec<f64>],
    labels: &[SkyCondition],
) -> Result<MetricsReport> {
    let n = targets.len();
    for len in [predictions.len(), persistence.len(), labels.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    let c = targets.first().map_or(0, Vec::len);
    if predictions.iter().chain(persistence).chain(targets).any(|r| r.len() != c) {
        return Err(Error::InvalidArgument("ragged horizon rows".into()));
    }
    let mut per_condition = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for cond in SkyCondition::ALL {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == cond).collect();
        counts.insert(cond, idx.len());
        if idx.is_empty() {
            continue;
        }
        let pick = |m: &[Vec<f64>]| -> Vec<Vec<f64>> { idx.iter().map(|&i| m[i].clone()).collect() };
        if let Ok(rows) = horizon_rows(&pick(predictions), &pick(targets), &pick(persistence)) {
            per_condition.insert(cond, rows);
        }
    }
    Ok(MetricsReport {
        horizons: horizon_rows(predictions, targets, persistence)?,
        per_condition,
        counts,
        total: n,
    })
}
