//! Kernel functions, Gram matrices and the inter-horizon correlation matrix.
//!
//! Distance-based kernels (RBF, rational quadratic, Matérn) take the
//! *squared* Euclidean distance as their argument, so Matérn with ν = 1/2
//! coincides with the RBF kernel. This differs from the usual textbook
//! Matérn (which uses the plain distance) and is intentional.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default diagonal jitter added to Gram matrices before factorization.
pub const DEFAULT_JITTER: f64 = 1e-10;

/// Smoothness of the Matérn kernel. Only the half-integer values with
/// closed forms are supported.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaternNu {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::Half => 0.5,
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `γ xᵀx'`
    Linear { gamma: f64 },
    /// `(γ xᵀx' + β)²`; the degree is fixed to 2.
    Polynomial { gamma: f64, beta: f64 },
    /// `exp(-γ‖x - x'‖²)`
    Rbf { gamma: f64 },
    /// `(1 + γ‖x - x'‖² / 2α)^(-α)`
    RationalQuadratic { gamma: f64, alpha: f64 },
    /// Matérn with argument `z = √(2ν) γ ‖x - x'‖²`.
    Matern { gamma: f64, nu: MaternNu },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &'static str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidHyperparameter { name, value })
            }
        };
        match *self {
            KernelSpec::Linear { gamma } | KernelSpec::Rbf { gamma } => check("gamma", gamma),
            KernelSpec::Matern { gamma, .. } => check("gamma", gamma),
            KernelSpec::Polynomial { gamma, beta } => {
                check("gamma", gamma)?;
                check("beta", beta)
            }
            KernelSpec::RationalQuadratic { gamma, alpha } => {
                check("gamma", gamma)?;
                check("alpha", alpha)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            KernelSpec::Linear { .. } => "L".into(),
            KernelSpec::Polynomial { .. } => "P2".into(),
            KernelSpec::Rbf { .. } => "RBF".into(),
            KernelSpec::RationalQuadratic { .. } => "RQ".into(),
            KernelSpec::Matern { nu, .. } => match nu {
                MaternNu::Half => "M1/2".into(),
                MaternNu::ThreeHalves => "M3/2".into(),
                MaternNu::FiveHalves => "M5/2".into(),
            },
        }
    }

    /// Kernel value for two vectors of equal length. No validation; see
    /// [`eval_kernel`] for the checked entry point.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear { gamma } => gamma * dot(a, b),
            KernelSpec::Polynomial { gamma, beta } => {
                let s = gamma * dot(a, b) + beta;
                s * s
            }
            KernelSpec::Rbf { gamma } => (-gamma * sq_dist(a, b)).exp(),
            KernelSpec::RationalQuadratic { gamma, alpha } => {
                (1.0 + gamma * sq_dist(a, b) / (2.0 * alpha)).powf(-alpha)
            }
            KernelSpec::Matern { gamma, nu } => {
                let z = (2.0 * nu.value()).sqrt() * gamma * sq_dist(a, b);
                matern_profile(nu, z)
            }
        }
    }

    /// Tunable hyperparameters in a fixed order (γ first).
    pub fn hyperparameters(&self) -> Vec<f64> {
        match *self {
            KernelSpec::Linear { gamma }
            | KernelSpec::Rbf { gamma }
            | KernelSpec::Matern { gamma, .. } => vec![gamma],
            KernelSpec::Polynomial { gamma, beta } => vec![gamma, beta],
            KernelSpec::RationalQuadratic { gamma, alpha } => vec![gamma, alpha],
        }
    }

    pub fn hyperparameter_names(&self) -> &'static [&'static str] {
        match self {
            KernelSpec::Linear { .. } | KernelSpec::Rbf { .. } | KernelSpec::Matern { .. } => {
                &["gamma"]
            }
            KernelSpec::Polynomial { .. } => &["gamma", "beta"],
            KernelSpec::RationalQuadratic { .. } => &["gamma", "alpha"],
        }
    }

    /// Same family with new hyperparameter values, in the order of
    /// [`KernelSpec::hyperparameters`].
    pub fn with_hyperparameters(&self, values: &[f64]) -> Result<KernelSpec> {
        let n = self.hyperparameters().len();
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        let spec = match *self {
            KernelSpec::Linear { .. } => KernelSpec::Linear { gamma: values[0] },
            KernelSpec::Rbf { .. } => KernelSpec::Rbf { gamma: values[0] },
            KernelSpec::Matern { nu, .. } => KernelSpec::Matern { gamma: values[0], nu },
            KernelSpec::Polynomial { .. } => {
                KernelSpec::Polynomial { gamma: values[0], beta: values[1] }
            }
            KernelSpec::RationalQuadratic { .. } => {
                KernelSpec::RationalQuadratic { gamma: values[0], alpha: values[1] }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Partial derivatives of the kernel value with respect to each
    /// hyperparameter, written into `out`.
    pub fn hyper_gradient(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match *self {
            KernelSpec::Linear { .. } => out[0] = dot(a, b),
            KernelSpec::Polynomial { gamma, beta } => {
                let s = dot(a, b);
                let base = gamma * s + beta;
                out[0] = 2.0 * base * s;
                out[1] = 2.0 * base;
            }
            KernelSpec::Rbf { gamma } => {
                let d2 = sq_dist(a, b);
                out[0] = -d2 * (-gamma * d2).exp();
            }
            KernelSpec::RationalQuadratic { gamma, alpha } => {
                let d2 = sq_dist(a, b);
                let u = 1.0 + gamma * d2 / (2.0 * alpha);
                let k = u.powf(-alpha);
                out[0] = -0.5 * d2 * k / u;
                out[1] = k * (-u.ln() + (u - 1.0) / u);
            }
            KernelSpec::Matern { gamma, nu } => {
                let c = (2.0 * nu.value()).sqrt();
                let d2 = sq_dist(a, b);
                let z = c * gamma * d2;
                let e = (-z).exp();
                let dk_dz = match nu {
                    MaternNu::Half => -e,
                    MaternNu::ThreeHalves => -z * e,
                    MaternNu::FiveHalves => -z * (1.0 + z) * e / 3.0,
                };
                out[0] = dk_dz * c * d2;
            }
        }
    }
}

/// Closed forms of `2^(1-ν)/Γ(ν) z^ν K_ν(z)` for half-integer ν.
#[inline]
fn matern_profile(nu: MaternNu, z: f64) -> f64 {
    let e = (-z).exp();
    match nu {
        MaternNu::Half => e,
        MaternNu::ThreeHalves => (1.0 + z) * e,
        MaternNu::FiveHalves => (1.0 + z + z * z / 3.0) * e,
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Checked kernel evaluation.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(spec.eval(x, y))
}

/// Copies the rows of an `N × d` matrix into owned vectors.
pub fn matrix_rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Symmetric kernel matrix with optional diagonal jitter.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    jitter: f64,
}

impl GramMatrix {
    /// Wraps an existing matrix. Symmetry is checked to within 1e-12
    /// relative to the largest entry.
    pub fn from_matrix(matrix: DMatrix<f64>, jitter: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: matrix.ncols() });
        }
        if matrix.nrows() == 0 {
            return Err(Error::Empty("gram matrix"));
        }
        let scale = matrix.amax().max(1.0);
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "gram matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { matrix, jitter })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Kernel matrix over the rows of `x`, plus `jitter` on the diagonal.
pub fn gram(spec: &KernelSpec, x: &DMatrix<f64>, jitter: f64) -> Result<GramMatrix> {
    spec.validate()?;
    if x.nrows() == 0 {
        return Err(Error::Empty("training inputs"));
    }
    if !(jitter >= 0.0) {
        return Err(Error::InvalidHyperparameter { name: "jitter", value: jitter });
    }
    let rows = matrix_rows(x);
    Ok(GramMatrix { matrix: gram_from_rows(spec, &rows, jitter), jitter })
}

pub(crate) fn gram_from_rows(spec: &KernelSpec, rows: &[Vec<f64>], jitter: f64) -> DMatrix<f64> {
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += jitter;
    }
    k
}

/// Kernel evaluations between every training row and a query point.
pub(crate) fn cross_kernel(spec: &KernelSpec, rows: &[Vec<f64>], query: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| spec.eval(r, query)).collect()
}

/// Inter-horizon correlation matrix Γ (C × C).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    /// `None` for matrices not built from a length scale (e.g. identity).
    length_scale: Option<f64>,
}

impl CorrelationMatrix {
    /// `γ_ij = exp((C - |i - j|) / (C ℓ))`. An infinite length scale gives
    /// the all-ones matrix.
    pub fn from_length_scale(horizons: usize, length_scale: f64) -> Result<Self> {
        if horizons == 0 {
            return Err(Error::Empty("horizons"));
        }
        if length_scale.is_nan() || length_scale <= 0.0 {
            return Err(Error::InvalidHyperparameter { name: "length_scale", value: length_scale });
        }
        let c = horizons as f64;
        let entries = DMatrix::from_fn(horizons, horizons, |i, j| {
            let lag = (i as f64 - j as f64).abs();
            ((c - lag) / (c * length_scale)).exp()
        });
        Ok(Self { entries, length_scale: Some(length_scale) })
    }

    /// Uncoupled tasks.
    pub fn identity(horizons: usize) -> Result<Self> {
        if horizons == 0 {
            return Err(Error::Empty("horizons"));
        }
        Ok(Self { entries: DMatrix::identity(horizons, horizons), length_scale: None })
    }

    pub fn horizons(&self) -> usize {
        self.entries.nrows()
    }

    pub fn length_scale(&self) -> Option<f64> {
        self.length_scale
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Elementwise derivative `∂γ_ij/∂ℓ`; zero for matrices without a
    /// length scale.
    pub fn length_scale_derivative(&self) -> DMatrix<f64> {
        match self.length_scale {
            None => DMatrix::zeros(self.horizons(), self.horizons()),
            Some(l) => {
                let c = self.horizons() as f64;
                DMatrix::from_fn(self.horizons(), self.horizons(), |i, j| {
                    let lag = (i as f64 - j as f64).abs();
                    let a = (c - lag) / c;
                    -a / (l * l) * (a / l).exp()
                })
            }
        }
    }
}

/// `Γ ⊗ K`: a CN × CN matrix whose (c, c') block is `γ_cc' K`. Stacked
/// vectors are task-major: index `c * N + i`.
pub fn kron_expand(gamma: &CorrelationMatrix, k: &GramMatrix) -> GramMatrix {
    GramMatrix { matrix: kron(gamma.entries(), k.matrix()), jitter: k.jitter }
}

pub(crate) fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for ci in 0..ar {
        for cj in 0..ac {
            let g = a[(ci, cj)];
            for j in 0..bc {
                for i in 0..br {
                    out[(ci * br + i, cj * bc + j)] = g * b[(i, j)];
                }
            }
        }
    }
    out
}
