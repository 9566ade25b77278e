use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::{kron_contract, stack_targets};
use crate::error::{Error, Result};
use crate::kernels::{gram, matrix_rows, CorrelationMatrix, GramMatrix, KernelSpec};

/// Stopping tolerance on the maximal KKT violation `m − M`.
const KKT_TOL: f64 = 1e-10;
/// Curvature floor for pairs along which the objective is linear.
const TAU: f64 = 1e-12;

/// Solution of the ε-SVR dual, possibly over several tasks sharing one
/// Kronecker Gram matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrDual {
    /// `α_i`, task-major over `C N` entries.
    pub alpha: DVector<f64>,
    /// `α*_i`, same layout.
    pub alpha_star: DVector<f64>,
    /// One bias per task.
    pub bias: Vec<f64>,
    pub box_bound: f64,
    pub epsilon: f64,
    /// Dual objective in maximization form.
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl SvrDual {
    /// `β = α − α*`.
    pub fn beta(&self) -> DVector<f64> {
        &self.alpha - &self.alpha_star
    }
}

/// Fitted support vector regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: KernelSpec,
    pub train: Vec<Vec<f64>>,
    pub correlation: CorrelationMatrix,
    pub dual: SvrDual,
    pub jitter: f64,
}

impl SvrModel {
    pub fn horizons(&self) -> usize {
        self.correlation.horizons()
    }

    /// `f_c(x) = Σ_c' γ_cc' Σ_i (α − α*)[c' N + i] K(x_i, x) + b_c`.
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>> {
        let d = self.train.first().map_or(0, Vec::len);
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let n = self.train.len();
        let beta = self.dual.beta();
        let k: Vec<f64> = (0..n)
            .map(|i| {
                let live = (0..self.horizons()).any(|c| beta[c * n + i] != 0.0);
                if live {
                    self.kernel.eval(&self.train[i], x)
                } else {
                    0.0
                }
            })
            .collect();
        let mut out = kron_contract(&self.correlation, &beta, &k);
        for (o, b) in out.iter_mut().zip(&self.dual.bias) {
            *o += b;
        }
        Ok(out)
    }
}

/// Kernel entry lookup over the task-major index space.
struct Problem<'a> {
    k: &'a DMatrix<f64>,
    gamma: &'a DMatrix<f64>,
    n: usize,
}

impl Problem<'_> {
    #[inline]
    fn entry(&self, a: usize, b: usize) -> f64 {
        self.gamma[(a / self.n, b / self.n)] * self.k[(a % self.n, b % self.n)]
    }
}

/// Single-task ε-SVR on a precomputed Gram matrix.
pub fn fit_svr(k: &GramMatrix, y: &DVector<f64>, box_bound: f64, epsilon: f64) -> Result<SvrDual> {
    let yy = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    fit_mt_svr(k, &yy, &CorrelationMatrix::identity(1)?, box_bound, epsilon)
}

/// Multi-task ε-SVR over `Γ ⊗ K` with a shared box bound and tube width
/// and one equality constraint (and bias) per task.
///
/// SMO over the `2 C N` variables `a_t ∈ [0, 𝒞]` (first half `α`, second
/// half `α*`, signs `s = ±1`), minimizing `½ aᵀQa + pᵀa` with
/// `Q_tu = s_t s_u K̃`, `p = ε ∓ y`, and the pair chosen by second-order
/// working-set selection inside the most violating task.
pub fn fit_mt_svr(
    k: &GramMatrix,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    box_bound: f64,
    epsilon: f64,
) -> Result<SvrDual> {
    let n = k.size();
    let tasks = correlation.horizons();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.nrows() });
    }
    if y.ncols() != tasks {
        return Err(Error::DimensionMismatch { expected: tasks, got: y.ncols() });
    }
    if !(box_bound > 0.0) || !box_bound.is_finite() {
        return Err(Error::InvalidHyperparameter { name: "C", value: box_bound });
    }
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidHyperparameter { name: "epsilon", value: epsilon });
    }
    let ys = stack_targets(y);
    let l = tasks * n;
    let prob = Problem { k: k.matrix(), gamma: correlation.entries(), n };
    let sign = |t: usize| if t < l { 1.0 } else { -1.0 };
    let point = |t: usize| if t < l { t } else { t - l };
    let group = |t: usize| point(t) / n;

    let mut a = vec![0.0; 2 * l];
    let mut grad: Vec<f64> =
        (0..2 * l).map(|t| if t < l { epsilon - ys[t] } else { epsilon + ys[t - l] }).collect();
    let diag: Vec<f64> = (0..l).map(|t| prob.entry(t, t)).collect();

    let in_up = |t: usize, a: &[f64]| if t < l { a[t] < box_bound } else { a[t] > 0.0 };
    let in_low = |t: usize, a: &[f64]| if t < l { a[t] > 0.0 } else { a[t] < box_bound };

    let max_iter = 10_000_000usize.max(200 * l);
    let mut iterations = 0;
    let mut col_i = vec![0.0; l];
    let mut col_j = vec![0.0; l];
    loop {
        // most violating pair per task; pick the task with the largest gap
        let mut best: Option<(usize, f64)> = None;
        let mut up_max = vec![(f64::NEG_INFINITY, usize::MAX); tasks];
        let mut low_min = vec![f64::INFINITY; tasks];
        for t in 0..2 * l {
            let v = -sign(t) * grad[t];
            let g = group(t);
            if in_up(t, &a) && v > up_max[g].0 {
                up_max[g] = (v, t);
            }
            if in_low(t, &a) && v < low_min[g] {
                low_min[g] = v;
            }
        }
        for g in 0..tasks {
            let gap = up_max[g].0 - low_min[g];
            if gap > KKT_TOL && best.is_none_or(|(_, b)| gap > b) {
                best = Some((g, gap));
            }
        }
        let Some((g, _)) = best else { break };
        if iterations >= max_iter {
            let dual = finish(&prob, &ys, &a, &grad, box_bound, epsilon, tasks, iterations);
            return Err(Error::NonConvergence { iterations, gap: dual.duality_gap });
        }
        iterations += 1;

        let (m, i) = up_max[g];
        let pi = point(i);
        for (u, c) in col_i.iter_mut().enumerate() {
            *c = prob.entry(u, pi);
        }
        let mut j = usize::MAX;
        let mut best_score = f64::INFINITY;
        for t in 0..2 * l {
            if group(t) != g || !in_low(t, &a) {
                continue;
            }
            let v = -sign(t) * grad[t];
            if v >= m {
                continue;
            }
            let b = m - v;
            let pt = point(t);
            let mut curv = diag[pi] + diag[pt] - 2.0 * col_i[pt];
            if curv <= 0.0 {
                curv = TAU;
            }
            let score = -b * b / curv;
            if score < best_score {
                best_score = score;
                j = t;
            }
        }
        let pj = point(j);
        let mut curv = diag[pi] + diag[pj] - 2.0 * col_i[pj];
        if curv <= 0.0 {
            curv = TAU;
        }
        let vj = -sign(j) * grad[j];
        // a_i += s_i t, a_j −= s_j t
        let mut step = (m - vj) / curv;
        let room_i = if sign(i) > 0.0 { box_bound - a[i] } else { a[i] };
        let room_j = if sign(j) > 0.0 { a[j] } else { box_bound - a[j] };
        step = step.min(room_i).min(room_j);
        if step <= 0.0 {
            // numerically stuck pair; nothing more to gain
            break;
        }
        a[i] = snapped(a[i] + sign(i) * step, box_bound, room_i == step, sign(i) > 0.0);
        a[j] = snapped(a[j] - sign(j) * step, box_bound, room_j == step, sign(j) < 0.0);
        for (u, c) in col_j.iter_mut().enumerate() {
            *c = prob.entry(u, pj);
        }
        for t in 0..2 * l {
            let pt = point(t);
            grad[t] += sign(t) * step * (col_i[pt] - col_j[pt]);
        }
    }
    Ok(finish(&prob, &ys, &a, &grad, box_bound, epsilon, tasks, iterations))
}

/// Snaps to the bound the step was clipped against so that bound
/// membership is exact.
fn snapped(value: f64, c: f64, clipped: bool, toward_upper: bool) -> f64 {
    match (clipped, toward_upper) {
        (true, true) => c,
        (true, false) => 0.0,
        _ => value.clamp(0.0, c),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    prob: &Problem,
    ys: &DVector<f64>,
    a: &[f64],
    grad: &[f64],
    c: f64,
    epsilon: f64,
    tasks: usize,
    iterations: usize,
) -> SvrDual {
    let l = ys.len();
    let n = prob.n;
    let beta: Vec<f64> = (0..l).map(|t| a[t] - a[t + l]).collect();
    let alpha = DVector::from_fn(l, |t, _| beta[t].max(0.0));
    let alpha_star = DVector::from_fn(l, |t, _| (-beta[t]).max(0.0));

    let bias: Vec<f64> = (0..tasks)
        .map(|g| {
            let mut free_sum = 0.0;
            let mut free = 0usize;
            let mut ub = f64::INFINITY;
            let mut lb = f64::NEG_INFINITY;
            for t in (g * n..(g + 1) * n).flat_map(|t| [t, t + l]) {
                let s = if t < l { 1.0 } else { -1.0 };
                let yg = s * grad[t];
                let at_upper = a[t] >= c;
                let at_lower = a[t] <= 0.0;
                if !at_upper && !at_lower {
                    free_sum += yg;
                    free += 1;
                } else if (s > 0.0) == at_upper {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            }
            if free > 0 {
                -free_sum / free as f64
            } else if (g * n..(g + 1) * n).all(|t| beta[t] == 0.0) {
                // empty model: the median target, kept inside the feasible interval
                let mut v: Vec<f64> = ys.rows(g * n, n).iter().copied().collect();
                v.sort_by(f64::total_cmp);
                let med = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
                med.clamp(-ub, -lb)
            } else {
                -0.5 * (ub + lb)
            }
        })
        .collect();

    let beta_v = DVector::from_vec(beta);
    let kb = DVector::from_fn(l, |t, _| (0..l).map(|u| prob.entry(t, u) * beta_v[u]).sum::<f64>());
    let quad = beta_v.dot(&kb);
    let dual = -0.5 * quad - epsilon * beta_v.iter().map(|b| b.abs()).sum::<f64>() + ys.dot(&beta_v);
    let slack: f64 = (0..l)
        .map(|t| ((ys[t] - kb[t] - bias[t / n]).abs() - epsilon).max(0.0))
        .sum();
    let primal = 0.5 * quad + c * slack;
    SvrDual {
        alpha,
        alpha_star,
        bias,
        box_bound: c,
        epsilon,
        dual_objective: dual,
        duality_gap: primal - dual,
        iterations,
    }
}

/// Single-task SVR from raw inputs.
pub fn svr(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    box_bound: f64,
    epsilon: f64,
    jitter: f64,
) -> Result<SvrModel> {
    let yy = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    mt_svr(kernel, x, &yy, &CorrelationMatrix::identity(1)?, box_bound, epsilon, jitter)
}

/// Multi-task SVR from raw inputs and an `N × C` target matrix.
pub fn mt_svr(
    kernel: KernelSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
    box_bound: f64,
    epsilon: f64,
    jitter: f64,
) -> Result<SvrModel> {
    let k = gram(&kernel, x, jitter)?;
    let dual = fit_mt_svr(&k, y, correlation, box_bound, epsilon)?;
    Ok(SvrModel { kernel, train: matrix_rows(x), correlation: correlation.clone(), dual, jitter })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_data() -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(12, 1, |i, _| i as f64 * 0.25 - 1.0);
        let y = DVector::from_fn(12, |i, _| 2.0 * x[(i, 0)] + 0.5);
        (x, y)
    }

    #[test]
    fn wide_tube_gives_empty_model() {
        let (x, y) = line_data();
        let m = svr(KernelSpec::Rbf { gamma: 1.0 }, &x, &y, 1.0, 100.0, 0.0).unwrap();
        assert!(m.dual.beta().iter().all(|&b| b == 0.0));
        let mut v: Vec<f64> = y.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let med = 0.5 * (v[5] + v[6]);
        assert_eq!(m.dual.bias[0], med);
        assert_eq!(m.predict(&[0.3]).unwrap()[0], med);
    }

    #[test]
    fn linear_kernel_fits_linear_data() {
        let (x, y) = line_data();
        let m = svr(KernelSpec::Linear { gamma: 1.0 }, &x, &y, 1e3, 0.0, 0.0).unwrap();
        for i in 0..12 {
            let r = m.predict(&[x[(i, 0)]]).unwrap()[0] - y[i];
            assert!(r.abs() <= 1e-3, "residual {r}");
        }
    }

    #[test]
    fn feasibility_and_gap() {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * 3 + j * 7) as f64 * 0.37).sin());
        let y = DVector::from_fn(20, |i, _| (i as f64 * 0.9).cos());
        let c = 2.0;
        let m = svr(KernelSpec::Rbf { gamma: 0.8 }, &x, &y, c, 0.1, 0.0).unwrap();
        let d = &m.dual;
        for t in 0..20 {
            assert!(d.alpha[t] >= 0.0 && d.alpha[t] <= c);
            assert!(d.alpha_star[t] >= 0.0 && d.alpha_star[t] <= c);
            assert!(d.alpha[t] * d.alpha_star[t] <= 1e-10);
        }
        assert!(d.beta().sum().abs() <= 1e-8);
        assert!(d.duality_gap <= 1e-6 * (1.0 + d.dual_objective.abs()), "gap {}", d.duality_gap);
        assert!(d.duality_gap >= -1e-9);
    }

    #[test]
    fn tube_membership_and_free_vectors() {
        let x = DMatrix::from_fn(25, 1, |i, _| i as f64 * 0.2);
        let y = DVector::from_fn(25, |i, _| (i as f64 * 0.2).sin() + 0.05 * ((i * 7) % 5) as f64);
        let (c, eps) = (5.0, 0.05);
        let m = svr(KernelSpec::Rbf { gamma: 2.0 }, &x, &y, c, eps, 0.0).unwrap();
        let beta = m.dual.beta();
        for i in 0..25 {
            let r = y[i] - m.predict(&[x[(i, 0)]]).unwrap()[0];
            if beta[i] == 0.0 {
                assert!(r.abs() <= eps + 1e-6);
            } else if beta[i].abs() < c {
                assert_relative_eq!(r.abs(), eps, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn hand_three_point_prediction() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let spec = KernelSpec::Rbf { gamma: 1.0 };
        let m = svr(spec, &x, &y, 10.0, 0.1, 0.0).unwrap();
        let beta = m.dual.beta();
        let q = [0.7];
        let direct: f64 =
            (0..3).map(|i| beta[i] * spec.eval(&[x[(i, 0)]], &q)).sum::<f64>() + m.dual.bias[0];
        assert_eq!(m.predict(&q).unwrap()[0], direct);
    }

    #[test]
    fn multitask_identity_matches_independent() {
        let x = DMatrix::from_fn(15, 2, |i, j| ((i * 5 + j) as f64 * 0.41).cos());
        let y = DMatrix::from_fn(15, 2, |i, c| ((i as f64) * (0.3 + 0.2 * c as f64)).sin());
        let spec = KernelSpec::Rbf { gamma: 0.5 };
        let joint =
            mt_svr(spec, &x, &y, &CorrelationMatrix::identity(2).unwrap(), 3.0, 0.05, 0.0).unwrap();
        let jb = joint.dual.beta();
        for c in 0..2 {
            let single = svr(spec, &x, &y.column(c).into_owned(), 3.0, 0.05, 0.0).unwrap();
            let sb = single.dual.beta();
            for i in 0..15 {
                assert_relative_eq!(jb[c * 15 + i], sb[i], epsilon = 1e-6);
            }
            assert_relative_eq!(joint.dual.bias[c], single.dual.bias[0], epsilon = 1e-6);
        }
    }

    #[test]
    fn multitask_constraints_per_task() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64 * 0.3);
        let y = DMatrix::from_fn(10, 3, |i, c| (i as f64 * 0.3 + c as f64).sin());
        let gamma = CorrelationMatrix::from_length_scale(3, 2.0).unwrap();
        let m = mt_svr(KernelSpec::Rbf { gamma: 1.0 }, &x, &y, &gamma, 1.0, 0.05, 0.0).unwrap();
        let beta = m.dual.beta();
        for c in 0..3 {
            assert!(beta.rows(c * 10, 10).sum().abs() <= 1e-8);
        }
        assert!(m.dual.alpha.iter().chain(m.dual.alpha_star.iter()).all(|&a| (0.0..=1.0).contains(&a)));
        assert_eq!(m.predict(&[0.4]).unwrap().len(), 3);
    }

    #[test]
    fn invalid_arguments() {
        let k = GramMatrix::from_matrix(DMatrix::identity(2, 2), 0.0).unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(fit_svr(&k, &y, 0.0, 0.1).is_err());
        assert!(fit_svr(&k, &y, 1.0, -0.1).is_err());
        assert!(fit_svr(&k, &DVector::zeros(3), 1.0, 0.1).is_err());
    }
}
