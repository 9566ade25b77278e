use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::kernels::KernelSpec;
use crate::multitask::Family;

/// Column-wise `(x − mean) / std` fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// False for constant columns and for exempt fits; those pass through.
    pub scaled: Vec<bool>,
}

impl Standardizer {
    /// Population moments per column. Constant columns are left unscaled
    /// with a warning; `exempt` disables scaling altogether.
    pub fn fit(x: &DMatrix<f64>, exempt: bool) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        let mut scaled = Vec::with_capacity(x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let m = col.sum() / n;
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            let ok = !exempt && s > 1e-12 * m.abs().max(1.0);
            if !exempt && !ok {
                log::warn!("column {j} has zero variance; left unscaled");
            }
            mean.push(if ok { m } else { 0.0 });
            std.push(if ok { s } else { 1.0 });
            scaled.push(ok);
        }
        Self { mean, std, scaled }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim], scaled: vec![false; dim] }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[j]) / self.std[j])
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.std[j]).collect()
    }

    pub fn invert_row(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(j, v)| v * self.std[j] + self.mean[j]).collect()
    }

    pub fn invert(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] * self.std[j] + self.mean[j])
    }
}

/// Feature and target scalers for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub features: Standardizer,
    pub targets: Standardizer,
    /// Polynomial kernels take raw features.
    pub features_exempt: bool,
    /// Bayesian families (GPR, RVM) take raw targets.
    pub targets_exempt: bool,
}

impl StandardizationParams {
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, kernel: &KernelSpec, family: Family) -> Self {
        let features_exempt = matches!(kernel, KernelSpec::Polynomial { .. });
        let targets_exempt = family.is_bayesian();
        Self {
            features: Standardizer::fit(x, features_exempt),
            targets: Standardizer::fit(y, targets_exempt),
            features_exempt,
            targets_exempt,
        }
    }
}
