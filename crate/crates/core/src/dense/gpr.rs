use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{kron_cross, kron_contract, stack_targets, DualWeights, GaussianPrediction, Regularization};
use crate::error::{Error, Result};
use crate::kernels::{gram, kron, kron_expand, matrix_rows, CorrelationMatrix, GramMatrix, KernelSpec};
use crate::linalg::{forward_substitute, SpdFactor};

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// A fitted (multi-task) Gaussian process: dual weights plus the lower
/// Cholesky factor of `K̃ + Σₙ ⊗ I` used for predictive covariances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprModel {
    pub weights: DualWeights,
    pub factor: DMatrix<f64>,
}

impl GprModel {
    pub fn noise_variances(&self) -> &[f64] {
        match &self.weights.regularization {
            Regularization::Noise { variances } => variances,
            Regularization::Ridge { .. } => unreachable!("gpr model always carries noise"),
        }
    }

    /// Predictive mean and latent covariance over all horizons. Diagonal
    /// entries that come out negative from round-off are clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let w = &self.weights;
        let k = w.cross(x)?;
        let mean = kron_contract(&w.correlation, &w.alpha, &k);
        let kss = w.kernel.eval(x, x);
        let b = kron_cross(&w.correlation, &k);
        let mut v = DMatrix::zeros(b.nrows(), b.ncols());
        for col in 0..b.ncols() {
            let solved = forward_substitute(&self.factor, &b.column(col).into_owned());
            v.set_column(col, &solved);
        }
        let mut cov = w.correlation.entries() * kss - v.transpose() * &v;
        let c = cov.nrows();
        for i in 0..c {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(i, i)] < 0.0 {
                cov[(i, i)] = 0.0;
            }
        }
        Ok(GaussianPrediction { mean, covariance: cov })
    }
}

/// Posterior dual mean `ᾱ = (K + σₙ² I)⁻¹ y` and the lower Cholesky factor
/// of `K + σₙ² I`.
pub fn gpr_posterior(
    k: &GramMatrix,
    y: &DVector<f64>,
    noise: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_noise(noise)?;
    if y.len() != k.size() {
        return Err(Error::DimensionMismatch { expected: k.size(), got: y.len() });
    }
    let mut a = k.matrix().clone();
    for i in 0..a.nrows() {
        a[(i, i)] += noise;
    }
    let f = SpdFactor::new(a)?;
    Ok((f.solve(y), f.lower()))
}

fn check_noise(noise: f64) -> Result<()> {
    if noise.is_finite() && noise > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter { name: "noise", value: noise })
    }
}

/// Single-task GP regression.
pub fn gpr(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise: f64,
    jitter: f64,
) -> Result<GprModel> {
    let yy = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    fit_mt_gpr(kernel, x, &yy, &CorrelationMatrix::identity(1)?, &[noise], jitter)
}

fn noise_diagonal(noises: &[f64], n: usize) -> DVector<f64> {
    DVector::from_fn(noises.len() * n, |r, _| noises[r / n])
}

/// Multi-task GP with `K̃ = Γ ⊗ K` and per-task noise variances.
pub fn fit_mt_gpr(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    noises: &[f64],
    jitter: f64,
) -> Result<GprModel> {
    let c = correlation.horizons();
    if y.ncols() != c || noises.len() != c {
        return Err(Error::DimensionMismatch { expected: c, got: y.ncols().min(noises.len()) });
    }
    if y.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.nrows() });
    }
    for &s in noises {
        check_noise(s)?;
    }
    let k = gram(&kernel, x, jitter)?;
    let mut big = kron_expand(correlation, &k).into_matrix();
    let d = noise_diagonal(noises, x.nrows());
    for i in 0..big.nrows() {
        big[(i, i)] += d[i];
    }
    let f = SpdFactor::new(big)?;
    let alpha = f.solve(&stack_targets(y));
    Ok(GprModel {
        weights: DualWeights {
            kernel,
            train: matrix_rows(x),
            alpha,
            correlation: correlation.clone(),
            regularization: Regularization::Noise { variances: noises.to_vec() },
            jitter,
        },
        factor: f.lower(),
    })
}

/// `−½ yᵀᾱ − ½ log|K + σₙ² I| − (N/2) log 2π`.
pub fn gpr_mll(k: &GramMatrix, y: &DVector<f64>, noise: f64) -> Result<f64> {
    check_noise(noise)?;
    if y.len() != k.size() {
        return Err(Error::DimensionMismatch { expected: k.size(), got: y.len() });
    }
    let mut a = k.matrix().clone();
    for i in 0..a.nrows() {
        a[(i, i)] += noise;
    }
    let f = SpdFactor::new(a)?;
    let alpha = f.solve(y);
    Ok(-0.5 * y.dot(&alpha) - 0.5 * f.log_det() - 0.5 * y.len() as f64 * LOG_2PI)
}

/// MLL of a zero-mean Gaussian with covariance `ky`, and its derivatives
/// along each matrix direction `dk` (`½ tr((ααᵀ − Ky⁻¹) dK)`).
fn mll_and_gradient(ky: DMatrix<f64>, y: &DVector<f64>, dks: &[DMatrix<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = ky.nrows();
    let f = SpdFactor::new(ky)?;
    let alpha = f.solve(y);
    let mll = -0.5 * y.dot(&alpha) - 0.5 * f.log_det() - 0.5 * n as f64 * LOG_2PI;
    let inv = f.inverse();
    let w = &alpha * alpha.transpose() - inv;
    let grads = dks.iter().map(|dk| 0.5 * w.component_mul(dk).sum()).collect();
    Ok((mll, grads))
}

fn kernel_derivative_matrices(kernel: &KernelSpec, rows: &[Vec<f64>]) -> Vec<DMatrix<f64>> {
    let p = kernel.hyperparameters().len();
    let n = rows.len();
    let mut out = vec![DMatrix::zeros(n, n); p];
    let mut g = vec![0.0; p];
    for i in 0..n {
        for j in 0..=i {
            kernel.hyper_gradient(&rows[i], &rows[j], &mut g);
            for (m, v) in out.iter_mut().zip(&g) {
                m[(i, j)] = *v;
                m[(j, i)] = *v;
            }
        }
    }
    out
}

/// Single-task MLL and its gradient with respect to
/// `[kernel hyperparameters..., σₙ²]`.
pub fn gpr_mll_gradient(
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise: f64,
    jitter: f64,
) -> Result<(f64, Vec<f64>)> {
    let yy = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let (mll, mut g) =
        mt_gpr_mll_gradient(kernel, x, &yy, &CorrelationMatrix::identity(1)?, &[noise], jitter)?;
    // drop the (zero) length-scale entry of the identity correlation
    let p = kernel.hyperparameters().len();
    g.remove(p);
    Ok((mll, g))
}

/// Multi-task MLL with `C N` observations.
pub fn mt_gpr_mll(
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    noises: &[f64],
    jitter: f64,
) -> Result<f64> {
    let k = gram(kernel, x, jitter)?;
    let mut big = kron_expand(correlation, &k).into_matrix();
    let d = noise_diagonal(noises, x.nrows());
    for i in 0..big.nrows() {
        big[(i, i)] += d[i];
    }
    let ys = stack_targets(y);
    let f = SpdFactor::new(big)?;
    let alpha = f.solve(&ys);
    Ok(-0.5 * ys.dot(&alpha) - 0.5 * f.log_det() - 0.5 * ys.len() as f64 * LOG_2PI)
}

/// Multi-task MLL and its gradient with respect to
/// `[kernel hyperparameters..., ℓ, σ₁², ..., σ_C²]`.
pub fn mt_gpr_mll_gradient(
    kernel: &KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    noises: &[f64],
    jitter: f64,
) -> Result<(f64, Vec<f64>)> {
    let c = correlation.horizons();
    if noises.len() != c || y.ncols() != c {
        return Err(Error::DimensionMismatch { expected: c, got: noises.len() });
    }
    for &s in noises {
        check_noise(s)?;
    }
    let n = x.nrows();
    let rows = matrix_rows(x);
    let k = gram(kernel, x, jitter)?;
    let gm = correlation.entries();
    let mut ky = kron(gm, k.matrix());
    let d = noise_diagonal(noises, n);
    for i in 0..ky.nrows() {
        ky[(i, i)] += d[i];
    }
    let mut dks: Vec<DMatrix<f64>> = kernel_derivative_matrices(kernel, &rows)
        .iter()
        .map(|dk| kron(gm, dk))
        .collect();
    dks.push(kron(&correlation.length_scale_derivative(), k.matrix()));
    for t in 0..c {
        let mut e = DMatrix::zeros(c * n, c * n);
        for i in 0..n {
            e[(t * n + i, t * n + i)] = 1.0;
        }
        dks.push(e);
    }
    mll_and_gradient(ky, &stack_targets(y), &dks)
}
