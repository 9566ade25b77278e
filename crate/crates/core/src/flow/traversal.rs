use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::streamline::Streamline;
use crate::error::{Error, Result};

/// Shape used when every Monte-Carlo sample is identical (point mass).
pub const MAX_SHAPE: f64 = 1e8;
pub const MIN_SAMPLES: usize = 1000;

/// Per-pixel gamma traversal times (shape–rate, mean `α/β`) and the
/// cumulative time-to-Sun model `Gamma(α̂^(ℓ), β̄)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalTimes {
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
    pub mean: Vec<f64>,
    pub cumulative_shape: Vec<f64>,
    /// `Σα / Σ mean`, the rate shared by every cumulative distribution.
    pub pooled_rate: f64,
}

impl TraversalTimes {
    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    /// Mean time for the cloud at pixel `l` to reach the Sun.
    pub fn cumulative_mean(&self, l: usize) -> f64 {
        self.cumulative_shape[l] / self.pooled_rate
    }
}

fn normal(sd: f64) -> Option<Normal<f64>> {
    (sd > 0.0).then(|| Normal::new(0.0, sd).expect("positive standard deviation"))
}

/// Closed-form gamma shape `0.5 / (ln mean − mean ln)`, capped at
/// [`MAX_SHAPE`] when the samples carry no spread.
pub fn gamma_shape(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_log = samples.iter().map(|t| t.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if s > 0.5 / MAX_SHAPE {
        0.5 / s
    } else {
        MAX_SHAPE
    }
}

/// Gamma density with shape `a` and rate `b`, evaluated in log space.
pub fn gamma_pdf(t: f64, a: f64, b: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (a * b.ln() - ln_gamma(a) + (a - 1.0) * t.ln() - b * t).exp()
}

/// Monte-Carlo traversal times along a streamline with attached geometry.
///
/// Sample `k` at pixel `ℓ` is `√(a_x Δx² + a_y Δy²) / |(u + ε_u, v + ε_v)|`
/// with independent `ε ~ N(0, e)` draws per pixel.
pub fn traversal_times(
    s: &Streamline,
    velocities: &[(f64, f64)],
    e_u: f64,
    e_v: f64,
    n_mc: usize,
    seed: u64,
) -> Result<TraversalTimes> {
    if s.is_empty() {
        return Err(Error::Empty("streamline"));
    }
    if s.cells.len() != s.len() {
        return Err(Error::InvalidArgument("streamline has no geometry attached".into()));
    }
    if velocities.len() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: velocities.len() });
    }
    if n_mc < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("n_mc = {n_mc} below {MIN_SAMPLES}")));
    }
    if !(e_u >= 0.0 && e_v >= 0.0) {
        return Err(Error::InvalidArgument("velocity errors must be nonnegative".into()));
    }
    let (nu, nv) = (normal(e_u), normal(e_v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0; n_mc];
    let (mut shape, mut rate, mut mean) = (Vec::new(), Vec::new(), Vec::new());
    for (l, (&(u, v), (cell, axis))) in
        velocities.iter().zip(s.cells.iter().zip(&s.axis)).enumerate()
    {
        let ax = if axis[0] { cell[0] * cell[0] } else { 0.0 };
        let ay = if axis[1] { cell[1] * cell[1] } else { 0.0 };
        let dist = (ax + ay).sqrt();
        for t in samples.iter_mut() {
            let du = nu.map_or(0.0, |d| d.sample(&mut rng));
            let dv = nv.map_or(0.0, |d| d.sample(&mut rng));
            let speed = (u + du).hypot(v + dv);
            *t = dist / speed;
            if !(t.is_finite() && *t > 0.0) {
                return Err(Error::InfiniteTraversal { index: l });
            }
        }
        let m = samples.iter().sum::<f64>() / n_mc as f64;
        let a = gamma_shape(&samples);
        shape.push(a);
        rate.push(a / m);
        mean.push(m);
    }
    let cumulative_shape: Vec<f64> = shape
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc)
        })
        .collect();
    let pooled_rate = shape.iter().sum::<f64>() / mean.iter().sum::<f64>();
    Ok(TraversalTimes { shape, rate, mean, cumulative_shape, pooled_rate })
}

/// Where (and how uncertainly) the cloud reaching the Sun at `horizon`
/// currently is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMoments {
    pub horizon: f64,
    /// `w_c^(ℓ)`: density of the cumulative time at pixel ℓ, at the horizon.
    pub weights: Vec<f64>,
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
    /// `e_{Δx′}`: mean squared displacement error from velocity noise.
    pub displacement: f64,
}

/// First and centered second moments `Σ x m` and `Σ x xᵀ m − x̄ x̄ᵀ`.
pub fn position_moments(coords: &[[f64; 2]], masses: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut mean = [0.0; 2];
    let mut second = [[0.0; 2]; 2];
    for (x, &w) in coords.iter().zip(masses) {
        for a in 0..2 {
            mean[a] += x[a] * w;
            for b in 0..2 {
                second[a][b] += x[a] * x[b] * w;
            }
        }
    }
    let cov = std::array::from_fn(|a| std::array::from_fn(|b| second[a][b] - mean[a] * mean[b]));
    (mean, cov)
}

/// Per-horizon intersection densities and position moments.
///
/// Masses are `w_c^(ℓ) Δt̄^(ℓ)` with `Δt̄^(ℓ) = α^(ℓ+1)/β̄` (the last pixel
/// reuses its own shape), used without renormalization.
pub fn intersection_moments(
    s: &Streamline,
    times: &TraversalTimes,
    horizons: &[f64],
    e_u: f64,
    e_v: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<HorizonMoments>> {
    if s.is_empty() || times.is_empty() {
        return Err(Error::Empty("streamline"));
    }
    if s.coords.len() != s.len() || times.len() != s.len() {
        return Err(Error::DimensionMismatch { expected: s.len(), got: times.len() });
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    if let Some(&t) = horizons.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidHyperparameter { name: "horizon", value: t });
    }
    let (nu, nv) = (normal(e_u), normal(e_v));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err2 = 0.0;
    for _ in 0..n_mc {
        let du = nu.map_or(0.0, |d| d.sample(&mut rng));
        let dv = nv.map_or(0.0, |d| d.sample(&mut rng));
        err2 += du * du + dv * dv;
    }
    err2 /= n_mc as f64;

    let l = times.len();
    let beta = times.pooled_rate;
    let dt: Vec<f64> = (0..l).map(|k| times.shape[(k + 1).min(l - 1)] / beta).collect();
    Ok(horizons
        .iter()
        .map(|&t| {
            let weights: Vec<f64> =
                times.cumulative_shape.iter().map(|&a| gamma_pdf(t, a, beta)).collect();
            let masses: Vec<f64> = weights.iter().zip(&dt).map(|(w, d)| w * d).collect();
            let (mean, covariance) = position_moments(&s.coords, &masses);
            HorizonMoments { horizon: t, weights, mean, covariance, displacement: t * t * err2 }
        })
        .collect())
}
