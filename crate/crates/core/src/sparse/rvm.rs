use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::{stack_targets, GaussianPrediction};
use crate::error::{Error, Result};
use crate::kernels::{gram, kron, matrix_rows, CorrelationMatrix, GramMatrix, KernelSpec};
use crate::linalg::{variance, SpdFactor};

pub const PRUNE_THRESHOLD: f64 = 1e12;
/// Log-scale change in every precision and the noise below which the
/// evidence iterations count as converged.
const CONVERGED: f64 = 1e-4;

/// When the evidence iterations stop and which iterate is returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RvmStop {
    /// Iterate until no pruning happens and the precisions and noise stop
    /// moving; return the last iterate.
    Converged,
    /// Stop once the residual sum of squares has not reached a new minimum
    /// for `patience` iterations; return the minimizing iterate.
    SsrPatience { patience: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvmOptions {
    pub stop: RvmStop,
    pub max_iterations: usize,
}

impl Default for RvmOptions {
    fn default() -> Self {
        Self { stop: RvmStop::Converged, max_iterations: 5000 }
    }
}

/// Posterior state of a relevance vector fit over the active basis set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvmFit {
    /// Indices (task-major, `c N + i`) of surviving basis functions.
    pub active: Vec<usize>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precisions: Vec<f64>,
    pub noise: f64,
    pub ssr: f64,
    pub iterations: usize,
    /// Active-set size after each iteration's pruning step.
    pub active_history: Vec<usize>,
    /// Residual sum of squares at every iterate.
    pub ssr_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RvmModel {
    pub kernel: KernelSpec,
    pub train: Vec<Vec<f64>>,
    pub correlation: CorrelationMatrix,
    pub fit: RvmFit,
    pub jitter: f64,
}

impl RvmModel {
    /// Predictive mean over the relevance vectors and covariance
    /// `σₙ² I + Bᵀ Σ B` with `B_tc = γ_c,task(t) K(x_point(t), x)`.
    pub fn predict(&self, x: &[f64]) -> Result<GaussianPrediction> {
        let d = self.train.first().map_or(0, Vec::len);
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let n = self.train.len();
        let c = self.correlation.horizons();
        let a = self.fit.active.len();
        let b = DMatrix::from_fn(a, c, |r, col| {
            let t = self.fit.active[r];
            self.correlation.get(col, t / n) * self.kernel.eval(&self.train[t % n], x)
        });
        let mean = b.transpose() * &self.fit.mean;
        let mut cov = b.transpose() * &self.fit.covariance * &b;
        for i in 0..c {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            cov[(i, i)] = cov[(i, i)].max(0.0) + self.fit.noise;
        }
        Ok(GaussianPrediction { mean, covariance: cov })
    }
}

struct Snapshot {
    active: Vec<usize>,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    precisions: Vec<f64>,
    noise: f64,
    ssr: f64,
}

/// Evidence maximization with the kernel matrix as design matrix.
pub fn fit_rvm(k: &GramMatrix, y: &DVector<f64>, options: &RvmOptions) -> Result<RvmFit> {
    if y.len() != k.size() {
        return Err(Error::DimensionMismatch { expected: k.size(), got: y.len() });
    }
    if y.len() < 2 {
        return Err(Error::InvalidArgument("relevance vector fit needs at least two samples".into()));
    }
    evidence_loop(k.matrix(), y, options)
}

/// Relevance vector fit over `Γ ⊗ K` with one shared noise variance.
pub fn fit_mt_rvm(
    k: &GramMatrix,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    options: &RvmOptions,
) -> Result<RvmFit> {
    let n = k.size();
    if y.nrows() != n || y.ncols() != correlation.horizons() {
        return Err(Error::DimensionMismatch {
            expected: n * correlation.horizons(),
            got: y.nrows() * y.ncols(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidArgument("relevance vector fit needs at least two samples".into()));
    }
    let design = kron(correlation.entries(), k.matrix());
    evidence_loop(&design, &stack_targets(y), options)
}

fn evidence_loop(phi: &DMatrix<f64>, y: &DVector<f64>, options: &RvmOptions) -> Result<RvmFit> {
    let rows = y.len();
    let mut active: Vec<usize> = (0..phi.ncols()).collect();
    let mut precisions = vec![1.0; active.len()];
    let var = variance(y.as_slice());
    let mut noise = if var > 0.0 { 0.1 * var } else { 1e-6 };
    let noise_floor = 1e-12 * var.max(1e-12);
    let mut kept: Option<Snapshot> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut ssr_history = Vec::new();
    let mut iterations = 0;
    let cross = phi.tr_mul(phi);
    let proj = phi.tr_mul(y);

    while iterations < options.max_iterations {
        iterations += 1;
        let phi_a = phi.select_columns(&active);
        let mut a = DMatrix::from_fn(active.len(), active.len(), |r, c| cross[(active[r], active[c])] / noise);
        for (r, l) in precisions.iter().enumerate() {
            a[(r, r)] += l;
        }
        let sigma = SpdFactor::new(a)?.inverse();
        let mean = &sigma * DVector::from_fn(active.len(), |r, _| proj[active[r]]) / noise;
        let ssr = (y - &phi_a * &mean).norm_squared();
        ssr_history.push(ssr);

        let record = match options.stop {
            RvmStop::Converged => true,
            RvmStop::SsrPatience { .. } => kept.as_ref().is_none_or(|b| ssr < b.ssr),
        };
        if record {
            kept = Some(Snapshot {
                active: active.clone(),
                mean: mean.clone(),
                covariance: sigma.clone(),
                precisions: precisions.clone(),
                noise,
                ssr,
            });
            since_best = 0;
        } else {
            since_best += 1;
            if let RvmStop::SsrPatience { patience } = options.stop {
                if since_best >= patience {
                    break;
                }
            }
        }

        let gammas: Vec<f64> = (0..active.len())
            .map(|r| (1.0 - precisions[r] * sigma[(r, r)]).clamp(0.0, 1.0))
            .collect();
        let dof = rows as f64 - gammas.iter().sum::<f64>();
        let new_noise = (ssr / dof.max(1e-12)).max(noise_floor);
        let mut shift = (new_noise / noise).ln().abs();
        noise = new_noise;
        let mut keep_active = Vec::with_capacity(active.len());
        let mut keep_prec = Vec::with_capacity(active.len());
        for r in 0..active.len() {
            let m2 = mean[r] * mean[r];
            let l = if m2 > 0.0 { gammas[r].max(f64::MIN_POSITIVE) / m2 } else { f64::INFINITY };
            if l <= PRUNE_THRESHOLD {
                shift = shift.max((l / precisions[r]).ln().abs());
                keep_active.push(active[r]);
                keep_prec.push(l);
            }
        }
        history.push(keep_active.len());
        if keep_active.is_empty() {
            if options.stop == RvmStop::Converged {
                kept = None;
            }
            break;
        }
        let pruned = keep_active.len() < active.len();
        active = keep_active;
        precisions = keep_prec;
        if options.stop == RvmStop::Converged && !pruned && shift < CONVERGED {
            break;
        }
    }

    let kept = kept.ok_or_else(|| Error::Degenerate("every basis function was pruned".into()))?;
    Ok(RvmFit {
        active: kept.active,
        mean: kept.mean,
        covariance: kept.covariance,
        precisions: kept.precisions,
        noise: kept.noise,
        ssr: kept.ssr,
        iterations,
        active_history: history,
        ssr_history,
    })
}

pub fn rvm(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    options: &RvmOptions,
    jitter: f64,
) -> Result<RvmModel> {
    let yy = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    mt_rvm(kernel, x, &yy, &CorrelationMatrix::identity(1)?, options, jitter)
}

pub fn mt_rvm(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    options: &RvmOptions,
    jitter: f64,
) -> Result<RvmModel> {
    let k = gram(&kernel, x, jitter)?;
    let fit = fit_mt_rvm(&k, y, correlation, options)?;
    Ok(RvmModel { kernel, train: matrix_rows(x), correlation: correlation.clone(), fit, jitter })
}
