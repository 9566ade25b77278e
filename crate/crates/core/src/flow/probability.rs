use ndarray::{Array2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::helmholtz::FlowPotentials;
use super::reproject::Reprojection;
use super::traversal::HorizonMoments;
use crate::error::{Error, Result};

/// `p ∝ |Φ″ + iΨ|²` with `Φ″ = max|Φ − Φ_sun| − |Φ − Φ_sun|`, summing to 1.
pub fn wave_probability(p: &FlowPotentials, sun: (usize, usize)) -> Result<Array2<f64>> {
    let phi = &p.streamfunction;
    let (m, n) = phi.dim();
    if sun.0 >= m || sun.1 >= n {
        return Err(Error::InvalidArgument(format!("sun pixel {sun:?} outside {m}x{n} grid")));
    }
    if p.potential.dim() != (m, n) {
        return Err(Error::DimensionMismatch { expected: m * n, got: p.potential.len() });
    }
    let at_sun = phi[sun];
    let dev = phi.mapv(|x| (x - at_sun).abs());
    let top = dev.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut prob = Zip::from(&dev).and(&p.potential).map_collect(|&d, &psi| (top - d).powi(2) + psi * psi);
    let total = prob.sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Degenerate("wave field is identically zero".into()));
    }
    prob.mapv_inplace(|x| x / total);
    Ok(prob)
}

/// Per-horizon maps `z_c = N(x; x̄_c, S_c + e_c I) · wave`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SunWeightMap {
    pub horizons: Vec<f64>,
    pub maps: Vec<Array2<f64>>,
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<[[f64; 2]; 2]>,
    pub displacements: Vec<f64>,
}

/// Inflated covariance `S + e I`, checked positive definite.
pub fn inflated_covariance(h: &HorizonMoments) -> Result<[[f64; 2]; 2]> {
    let mut s = h.covariance;
    s[0][0] += h.displacement;
    s[1][1] += h.displacement;
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if !(s[0][0] > 0.0 && det > 0.0 && det.is_finite()) {
        return Err(Error::Degenerate(format!(
            "position covariance at horizon {} is not positive definite",
            h.horizon
        )));
    }
    Ok(s)
}

pub fn sun_weight_map(
    moments: &[HorizonMoments],
    wave: &Array2<f64>,
    geo: &Reprojection,
) -> Result<SunWeightMap> {
    if geo.x.dim() != wave.dim() {
        return Err(Error::DimensionMismatch { expected: wave.len(), got: geo.x.len() });
    }
    let maps = moments
        .par_iter()
        .map(|h| {
            let s = inflated_covariance(h)?;
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
            let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
            let [mx, my] = h.mean;
            Ok(Zip::from(&geo.x).and(&geo.y).and(wave).map_collect(|&x, &y, &w| {
                let (a, b) = (x - mx, y - my);
                let q = a * (inv[0][0] * a + inv[0][1] * b) + b * (inv[1][0] * a + inv[1][1] * b);
                norm * (-0.5 * q).exp() * w
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SunWeightMap {
        horizons: moments.iter().map(|h| h.horizon).collect(),
        maps,
        means: moments.iter().map(|h| h.mean).collect(),
        covariances: moments.iter().map(|h| h.covariance).collect(),
        displacements: moments.iter().map(|h| h.displacement).collect(),
    })
}

/// Weighted mean and standard deviation `(ΣzF/Σz, √(Σz(F−m)²/Σz))`.
pub fn weighted_moments(f: &[f64], z: &[f64]) -> Result<(f64, f64)> {
    if f.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: f.len(), got: z.len() });
    }
    let total: f64 = z.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Degenerate("zero total weight".into()));
    }
    let m = f.iter().zip(z).map(|(a, w)| a * w).sum::<f64>() / total;
    let var = f.iter().zip(z).map(|(a, w)| w * (a - m).powi(2)).sum::<f64>() / total;
    Ok((m, var.sqrt()))
}
