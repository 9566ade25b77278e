//! Dense kernel regressors: kernel ridge regression and Gaussian process
//! regression, both in single-task and Kronecker multi-task form.
//!
//! Multi-task targets are stacked task-major: for `N` samples and `C`
//! horizons, entry `c * N + i` holds the target of sample `i` at horizon
//! `c`. This is the column-major layout of an `N × C` target matrix.

mod gpr;
mod krr;
mod optimize;

pub use gpr::{
    fit_mt_gpr, gpr, gpr_mll, gpr_mll_gradient, gpr_posterior, mt_gpr_mll,
    mt_gpr_mll_gradient, GprModel,
};
pub use krr::{fit_krr, krr, krr_objective, mt_krr};
pub use optimize::{optimize_gpr_hypers, optimize_mt_gpr_hypers, GprHypers, MtGprHypers, MtGprSeed};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, CorrelationMatrix, KernelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// Ridge term added to the diagonal of the (Kronecker) Gram matrix.
    Ridge { lambda: f64 },
    /// Per-task noise variances (one entry for single-task models).
    Noise { variances: Vec<f64> },
}

/// Fitted dual coefficients together with everything needed to predict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualWeights {
    pub kernel: KernelSpec,
    pub train: Vec<Vec<f64>>,
    /// Length `C * N`, task-major.
    pub alpha: DVector<f64>,
    /// `C × C`; a 1 × 1 identity for single-task models.
    pub correlation: CorrelationMatrix,
    pub regularization: Regularization,
    pub jitter: f64,
}

impl DualWeights {
    pub fn horizons(&self) -> usize {
        self.correlation.horizons()
    }

    pub fn input_dim(&self) -> usize {
        self.train.first().map_or(0, Vec::len)
    }

    pub(crate) fn cross(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(cross_kernel(&self.kernel, &self.train, x))
    }

    /// Mean prediction for all horizons, ordered by horizon.
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        let k = self.cross(x)?;
        Ok(kron_contract(&self.correlation, &self.alpha, &k))
    }
}

/// `ŷ_c = Σ_c' γ_cc' Σ_i α[c' N + i] k_i`.
pub(crate) fn kron_contract(
    gamma: &CorrelationMatrix,
    alpha: &DVector<f64>,
    k: &[f64],
) -> DVector<f64> {
    let c = gamma.horizons();
    let n = k.len();
    let partial: Vec<f64> = (0..c)
        .map(|t| alpha.rows(t * n, n).iter().zip(k).map(|(a, b)| a * b).sum())
        .collect();
    DVector::from_fn(c, |row, _| (0..c).map(|t| gamma.get(row, t) * partial[t]).sum())
}

/// `Γ ⊗ k(x*)` as a `CN × C` matrix: column `c` has entries `γ_c'c k_i`.
pub(crate) fn kron_cross(gamma: &CorrelationMatrix, k: &[f64]) -> DMatrix<f64> {
    let c = gamma.horizons();
    let n = k.len();
    DMatrix::from_fn(c * n, c, |row, col| gamma.get(row / n, col) * k[row % n])
}

/// Stacks an `N × C` target matrix task-major.
pub fn stack_targets(y: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(y.as_slice())
}

/// Mean and covariance of a Gaussian predictive distribution over `C`
/// horizons (`C = 1` for single-task models).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPrediction {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianPrediction {
    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }
}
