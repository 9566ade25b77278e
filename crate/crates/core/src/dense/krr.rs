use nalgebra::{DMatrix, DVector};

use super::{stack_targets, DualWeights, Regularization};
use crate::error::{Error, Result};
use crate::kernels::{gram, kron_expand, CorrelationMatrix, GramMatrix, KernelSpec};
use crate::linalg::SpdFactor;

/// Closed-form dual weights `α = (K + λI)⁻¹ y`.
pub fn fit_krr(k: &GramMatrix, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if y.len() != k.size() {
        return Err(Error::DimensionMismatch { expected: k.size(), got: y.len() });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidHyperparameter { name: "lambda", value: lambda });
    }
    let mut a = k.matrix().clone();
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    Ok(SpdFactor::new(a)?.solve(y))
}

/// Ridge objective `‖y − Kα‖² + λ αᵀKα`, minimized by [`fit_krr`].
pub fn krr_objective(k: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, alpha: &DVector<f64>) -> f64 {
    let ka = k * alpha;
    (y - &ka).norm_squared() + lambda * alpha.dot(&ka)
}

/// Single-task KRR with regularization `γ`, scaled to `λ = γ / N`.
pub fn krr(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    ridge: f64,
    jitter: f64,
) -> Result<DualWeights> {
    let yy = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    mt_krr(kernel, x, &yy, &CorrelationMatrix::identity(1)?, ridge, jitter)
}

/// Kronecker multi-task KRR on an `N × C` target matrix with
/// `λ = γ / (C N)`.
pub fn mt_krr(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    ridge: f64,
    jitter: f64,
) -> Result<DualWeights> {
    if y.nrows() != x.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.nrows() });
    }
    if y.ncols() != correlation.horizons() {
        return Err(Error::DimensionMismatch { expected: correlation.horizons(), got: y.ncols() });
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidHyperparameter { name: "ridge", value: ridge });
    }
    let k = gram(&kernel, x, jitter)?;
    let big = kron_expand(correlation, &k);
    let lambda = ridge / big.size() as f64;
    let alpha = fit_krr(&big, &stack_targets(y), lambda)?;
    Ok(DualWeights {
        kernel,
        train: crate::kernels::matrix_rows(x),
        alpha,
        correlation: correlation.clone(),
        regularization: Regularization::Ridge { lambda },
        jitter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gm(rows: usize, data: &[f64]) -> GramMatrix {
        GramMatrix::from_matrix(DMatrix::from_row_slice(rows, rows, data), 0.0).unwrap()
    }

    #[test]
    fn identity_system() {
        let k = gm(2, &[1.0, 0.0, 0.0, 1.0]);
        let a = fit_krr(&k, &DVector::from_vec(vec![2.0, 4.0]), 1.0).unwrap();
        assert_relative_eq!(a[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(a[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_lambda_interpolates() {
        let k = gm(3, &[2.0, 0.5, 0.1, 0.5, 1.5, 0.3, 0.1, 0.3, 1.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = fit_krr(&k, &y, 0.0).unwrap();
        let r = k.matrix() * &a - &y;
        assert!(r.amax() <= 1e-8 * y.amax());
    }

    #[test]
    fn hand_three_by_three() {
        // (K + λI) = [[2,1,0],[1,2,1],[0,1,2]], y = [1,1,1] → α = [0.5, 0, 0.5].
        let k = gm(3, &[1.5, 1.0, 0.0, 1.0, 1.5, 1.0, 0.0, 1.0, 1.5]);
        let a = fit_krr(&k, &DVector::from_vec(vec![1.0, 1.0, 1.0]), 0.5).unwrap();
        assert_relative_eq!(a, DVector::from_vec(vec![0.5, 0.0, 0.5]), epsilon = 1e-12);
    }

    #[test]
    fn huge_lambda_shrinks() {
        let k = gm(2, &[1.0, 0.3, 0.3, 1.0]);
        let y = DVector::from_vec(vec![3.0, -4.0]);
        let a = fit_krr(&k, &y, 1e6).unwrap();
        assert!(a.norm() < 1e-5);
        assert_relative_eq!(a.norm(), y.norm() / 1e6, max_relative = 1e-5);
    }

    #[test]
    fn singular_without_ridge_errors() {
        let k = gm(2, &[1.0, 1.0, 1.0, 1.0]);
        let err = fit_krr(&k, &DVector::from_vec(vec![1.0, 2.0]), 0.0).unwrap_err();
        assert!(matches!(err, Error::Conditioning { .. }));
    }

    #[test]
    fn predicts_training_target_when_interpolating() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.7, 1.5, 2.2]);
        let y = DVector::from_vec(vec![1.0, 0.2, -0.4, 0.9]);
        let model = krr(KernelSpec::Rbf { gamma: 1.0 }, &x, &y, 0.0, 0.0).unwrap();
        for i in 0..4 {
            let p = model.predict(&[x[(i, 0)]]).unwrap();
            assert_relative_eq!(p[0], y[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_weights_predict_zero() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let model = krr(KernelSpec::Rbf { gamma: 1.0 }, &x, &DVector::zeros(2), 1.0, 0.0).unwrap();
        assert_eq!(model.predict(&[0.5]).unwrap()[0], 0.0);
        assert!(matches!(model.predict(&[0.5, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn prediction_matches_direct_formula() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.5, -0.5, 0.2]);
        let y = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let spec = KernelSpec::Rbf { gamma: 0.8 };
        let model = krr(spec, &x, &y, 0.9, 0.0).unwrap();
        let k = gram(&spec, &x, 0.0).unwrap();
        let lambda = 0.9 / 3.0;
        let inv = (k.matrix() + DMatrix::identity(3, 3) * lambda).try_inverse().unwrap();
        let alpha = inv * &y;
        let q = [0.4, 0.1];
        let direct: f64 = (0..3)
            .map(|i| alpha[i] * spec.eval(&[x[(i, 0)], x[(i, 1)]], &q))
            .sum();
        assert_relative_eq!(model.predict(&q).unwrap()[0], direct, epsilon = 1e-12);
    }
}
