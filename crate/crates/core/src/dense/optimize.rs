//! Multi-start gradient ascent of the marginal log-likelihood in
//! log-hyperparameter space.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gpr::{gpr_mll_gradient, mt_gpr_mll_gradient};
use crate::error::{Error, Result};
use crate::kernels::{CorrelationMatrix, KernelSpec};

const LOG_BOUND: f64 = 15.0;
const MAX_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GprHypers {
    pub kernel: KernelSpec,
    pub noise: f64,
    pub mll: f64,
    /// False when no start improved on its seed.
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtGprSeed {
    pub kernel: KernelSpec,
    pub length_scale: f64,
    pub noises: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtGprHypers {
    pub kernel: KernelSpec,
    pub length_scale: f64,
    pub noises: Vec<f64>,
    pub mll: f64,
    pub improved: bool,
}

struct Ascent {
    point: Vec<f64>,
    value: f64,
    improved: bool,
}

/// Maximizes `f` over `θ = log p`. `f` returns the objective and its
/// gradient with respect to `p`; failures count as `−∞`.
fn ascend<F>(start: &[f64], f: &F) -> Option<Ascent>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let eval = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p: Vec<f64> = theta.iter().map(|t| t.exp()).collect();
        let (v, g) = f(&p).ok()?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        Some((v, g.iter().zip(&p).map(|(gi, pi)| gi * pi).collect()))
    };
    let mut theta: Vec<f64> =
        start.iter().map(|p| p.ln().clamp(-LOG_BOUND, LOG_BOUND)).collect();
    let (seed_value, mut grad) = eval(&theta)?;
    let mut value = seed_value;
    let mut step = 0.5;
    for _ in 0..MAX_ITERS {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-8 || step < 1e-10 {
            break;
        }
        let trial: Vec<f64> = theta
            .iter()
            .zip(&grad)
            .map(|(t, g)| (t + step * g / norm).clamp(-LOG_BOUND, LOG_BOUND))
            .collect();
        match eval(&trial) {
            Some((v, g)) if v > value => {
                theta = trial;
                value = v;
                grad = g;
                step *= 1.5;
            }
            _ => step *= 0.5,
        }
    }
    Some(Ascent {
        point: theta.iter().map(|t| t.exp()).collect(),
        value,
        improved: value > seed_value,
    })
}

fn best_of(runs: Vec<Option<Ascent>>) -> Result<(usize, Ascent)> {
    let any_improved = runs.iter().flatten().any(|r| r.improved);
    let (index, mut best) = runs
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|a| (i, a)))
        .fold(None::<(usize, Ascent)>, |acc, (i, r)| match acc {
            Some((j, a)) if a.value >= r.value => Some((j, a)),
            _ => Some((i, r)),
        })
        .ok_or_else(|| Error::Degenerate("marginal likelihood undefined at every seed".into()))?;
    if !any_improved {
        warn!("hyperparameter ascent did not improve on any seed");
    }
    best.improved = any_improved;
    Ok((index, best))
}

/// Single-task hyperparameters (kernel parameters and noise variance)
/// seeded from each `(kernel, noise)` pair in `seeds`.
pub fn optimize_gpr_hypers(
    seeds: &[(KernelSpec, f64)],
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    jitter: f64,
) -> Result<GprHypers> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed grid"));
    }
    if x.nrows() == 0 {
        return Err(Error::Empty("training data"));
    }
    let runs = seeds
        .iter()
        .map(|(k, noise)| {
            let mut start = k.hyperparameters();
            start.push(*noise);
            let p = start.len();
            let f = |q: &[f64]| -> Result<(f64, Vec<f64>)> {
                let kernel = k.with_hyperparameters(&q[..p - 1])?;
                gpr_mll_gradient(&kernel, x, y, q[p - 1], jitter)
            };
            ascend(&start, &f)
        })
        .collect();
    let (index, best) = best_of(runs)?;
    let p = best.point.len();
    let kernel = seeds[index].0.with_hyperparameters(&best.point[..p - 1])?;
    Ok(GprHypers { kernel, noise: best.point[p - 1], mll: best.value, improved: best.improved })
}

/// Joint kernel parameters, correlation length scale and per-task noises.
pub fn optimize_mt_gpr_hypers(
    seeds: &[MtGprSeed],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    jitter: f64,
) -> Result<MtGprHypers> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed grid"));
    }
    let c = y.ncols();
    let mut runs = Vec::with_capacity(seeds.len());
    for seed in seeds {
        if seed.noises.len() != c {
            return Err(Error::DimensionMismatch { expected: c, got: seed.noises.len() });
        }
        let mut start = seed.kernel.hyperparameters();
        let p = start.len();
        start.push(seed.length_scale);
        start.extend(&seed.noises);
        let f = |q: &[f64]| -> Result<(f64, Vec<f64>)> {
            let kernel = seed.kernel.with_hyperparameters(&q[..p])?;
            let gamma = CorrelationMatrix::from_length_scale(c, q[p])?;
            mt_gpr_mll_gradient(&kernel, x, y, &gamma, &q[p + 1..], jitter)
        };
        runs.push(ascend(&start, &f));
    }
    let (index, best) = best_of(runs)?;
    let kernel = seeds[index].kernel;
    let p = kernel.hyperparameters().len();
    Ok(MtGprHypers {
        kernel: kernel.with_hyperparameters(&best.point[..p])?,
        length_scale: best.point[p],
        noises: best.point[p + 1..].to_vec(),
        mll: best.value,
        improved: best.improved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{gpr, gpr_mll, mt_gpr_mll};
    use crate::kernels::gram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rbf_sample(n: usize, gamma: f64, noise: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
        let k = gram(&KernelSpec::Rbf { gamma }, &x, 1e-10).unwrap();
        let l = k.into_matrix().cholesky().unwrap().l();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = DVector::from_fn(n, |_, _| noise.sqrt() * rng.sample::<f64, _>(StandardNormal));
        (x, l * z + e)
    }

    fn grid(gammas: &[f64], noise: f64) -> Vec<(KernelSpec, f64)> {
        gammas.iter().map(|&g| (KernelSpec::Rbf { gamma: g }, noise)).collect()
    }

    #[test]
    fn result_dominates_seeds() {
        let (x, y) = rbf_sample(30, 1.0, 0.01, 3);
        let seeds = grid(&[0.01, 0.1, 1.0, 10.0], 0.1);
        let h = optimize_gpr_hypers(&seeds, &x, &y, 1e-10).unwrap();
        for (k, s) in &seeds {
            let m = gpr_mll(&gram(k, &x, 1e-10).unwrap(), &y, *s).unwrap();
            assert!(h.mll >= m);
        }
        assert!(h.improved);
    }

    #[test]
    fn recovers_rbf_gamma() {
        for seed in 0..3 {
            let (x, y) = rbf_sample(40, 1.0, 0.01, 100 + seed);
            let h = optimize_gpr_hypers(&grid(&[0.05, 0.3, 2.0, 8.0], 0.1), &x, &y, 1e-10)
                .unwrap();
            let g = h.kernel.hyperparameters()[0];
            assert!((0.5..=2.0).contains(&g), "seed {seed}: gamma {g}");
        }
    }

    #[test]
    fn constant_target_gives_small_noise() {
        let x = DMatrix::from_fn(20, 1, |i, _| i as f64 * 0.3);
        let y = DVector::from_element(20, 0.7);
        let h = optimize_gpr_hypers(&grid(&[0.1, 1.0], 0.5), &x, &y, 1e-10).unwrap();
        assert!(h.noise < 1e-3, "noise {}", h.noise);
        let m = gpr(h.kernel, &x, &y, h.noise, 1e-10).unwrap();
        let p = m.predict(&[2.05]).unwrap();
        assert!((p.mean[0] - 0.7).abs() < 1e-2);
    }

    #[test]
    fn mt_result_dominates_seed() {
        let (x, y1) = rbf_sample(15, 1.0, 0.01, 9);
        let y = DMatrix::from_fn(15, 2, |i, c| y1[i] * (1.0 - 0.2 * c as f64));
        let seed = MtGprSeed {
            kernel: KernelSpec::Rbf { gamma: 0.3 },
            length_scale: 1.0,
            noises: vec![0.1, 0.1],
        };
        let h = optimize_mt_gpr_hypers(std::slice::from_ref(&seed), &x, &y, 1e-10).unwrap();
        let at_seed = mt_gpr_mll(
            &seed.kernel,
            &x,
            &y,
            &CorrelationMatrix::from_length_scale(2, 1.0).unwrap(),
            &seed.noises,
            1e-10,
        )
        .unwrap();
        assert!(h.mll > at_seed);
        assert_eq!(h.noises.len(), 2);
    }
}
