use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dynamics::{diff_x, diff_y};
use super::fields::VectorField;
use crate::error::{Error, Result};

/// Streamfunction Φ and velocity potential Ψ of a velocity field.
///
/// Both carry the linear ramp of the mean flow, so a uniform flow `(U, V)`
/// has `Ψ = U x + V y` and `Φ = U y − V x` (up to constants).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPotentials {
    pub streamfunction: Array2<f64>,
    pub potential: Array2<f64>,
    pub mean_flow: [f64; 2],
    pub iterations: usize,
}

pub const HELMHOLTZ_TOL: f64 = 1e-6;

/// Applies the central-difference operator on a row-major `m × n` grid.
#[derive(Clone, Copy)]
struct Grid {
    m: usize,
    n: usize,
}

impl Grid {
    #[inline]
    fn dx(self, f: &[f64], i: usize, j: usize) -> f64 {
        let r = i * self.n;
        if j == 0 {
            f[r + 1] - f[r]
        } else if j == self.n - 1 {
            f[r + j] - f[r + j - 1]
        } else {
            0.5 * (f[r + j + 1] - f[r + j - 1])
        }
    }

    #[inline]
    fn dy(self, f: &[f64], i: usize, j: usize) -> f64 {
        let n = self.n;
        if i == 0 {
            f[n + j] - f[j]
        } else if i == self.m - 1 {
            f[i * n + j] - f[(i - 1) * n + j]
        } else {
            0.5 * (f[(i + 1) * n + j] - f[(i - 1) * n + j])
        }
    }

    /// `out += sign · Dxᵀ g`
    fn dx_adjoint(self, g: &[f64], sign: f64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..self.m {
            let r = i * n;
            out[r] -= sign * g[r];
            out[r + 1] += sign * g[r];
            for j in 1..n - 1 {
                let v = 0.5 * sign * g[r + j];
                out[r + j + 1] += v;
                out[r + j - 1] -= v;
            }
            out[r + n - 1] += sign * g[r + n - 1];
            out[r + n - 2] -= sign * g[r + n - 1];
        }
    }

    /// `out += sign · Dyᵀ g`
    fn dy_adjoint(self, g: &[f64], sign: f64, out: &mut [f64]) {
        let (m, n) = (self.m, self.n);
        for j in 0..n {
            out[j] -= sign * g[j];
            out[n + j] += sign * g[j];
            for i in 1..m - 1 {
                let v = 0.5 * sign * g[i * n + j];
                out[(i + 1) * n + j] += v;
                out[(i - 1) * n + j] -= v;
            }
            let last = (m - 1) * n + j;
            out[last] += sign * g[last];
            out[last - n] -= sign * g[last];
        }
    }

    // (Ψ, Φ) ↦ (Ψ_x + Φ_y, Ψ_y − Φ_x)
    fn forward(self, psi: &[f64], phi: &[f64], u: &mut [f64], v: &mut [f64]) {
        for i in 0..self.m {
            for j in 0..self.n {
                u[i * self.n + j] = self.dx(psi, i, j) + self.dy(phi, i, j);
                v[i * self.n + j] = self.dy(psi, i, j) - self.dx(phi, i, j);
            }
        }
    }

    fn adjoint(self, u: &[f64], v: &[f64], psi: &mut [f64], phi: &mut [f64]) {
        psi.fill(0.0);
        phi.fill(0.0);
        self.dx_adjoint(u, 1.0, psi);
        self.dy_adjoint(v, 1.0, psi);
        self.dy_adjoint(u, 1.0, phi);
        self.dx_adjoint(v, -1.0, phi);
    }
}

fn forward(psi: &Array2<f64>, phi: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    (diff_x(psi) + diff_y(phi), diff_y(psi) - diff_x(phi))
}

fn norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).map(|x| x * x).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn centered(a: &mut Array2<f64>) {
    let mean = a.mean().unwrap_or(0.0);
    a.mapv_inplace(|x| x - mean);
}

/// Least-squares Helmholtz split `V ≈ ∇Ψ + rot Φ` with `rot Φ = (Φ_y, −Φ_x)`.
///
/// The normal equations are the coupled Poisson problems for Ψ and Φ with
/// natural (Neumann) boundaries; they are solved by CGLS from zero until
/// the normal residual drops below `1e-6` relative to the right-hand side.
/// The mean flow is removed first and its ramps added back to both fields.
pub fn helmholtz_decompose(v: &VectorField) -> Result<FlowPotentials> {
    let (m, n) = v.dim();
    let mu = v.u.mean().unwrap_or(0.0);
    let mv = v.v.mean().unwrap_or(0.0);

    let g = Grid { m, n };
    let len = m * n;
    let mut ru: Vec<f64> = v.u.iter().map(|x| x - mu).collect();
    let mut rv: Vec<f64> = v.v.iter().map(|x| x - mv).collect();
    let (mut psi, mut phi) = (vec![0.0; len], vec![0.0; len]);
    let (mut s_psi, mut s_phi) = (vec![0.0; len], vec![0.0; len]);
    let (mut qu, mut qv) = (vec![0.0; len], vec![0.0; len]);
    g.adjoint(&ru, &rv, &mut s_psi, &mut s_phi);
    let target = norm2(&s_psi, &s_phi).sqrt();
    let (mut p_psi, mut p_phi) = (s_psi.clone(), s_phi.clone());
    let mut gamma = norm2(&s_psi, &s_phi);
    let max_iter = 4 * m * n + 1000;
    let mut iterations = 0;
    while target > 0.0 && gamma.sqrt() > HELMHOLTZ_TOL * target {
        if iterations == max_iter {
            return Err(Error::NonConvergence { iterations, gap: gamma.sqrt() / target });
        }
        iterations += 1;
        g.forward(&p_psi, &p_phi, &mut qu, &mut qv);
        let qq = norm2(&qu, &qv);
        if qq == 0.0 {
            break;
        }
        let a = gamma / qq;
        axpy(a, &p_psi, &mut psi);
        axpy(a, &p_phi, &mut phi);
        axpy(-a, &qu, &mut ru);
        axpy(-a, &qv, &mut rv);
        g.adjoint(&ru, &rv, &mut s_psi, &mut s_phi);
        let next = norm2(&s_psi, &s_phi);
        let b = next / gamma;
        gamma = next;
        p_psi.iter_mut().zip(&s_psi).for_each(|(p, &s)| *p = s + b * *p);
        p_phi.iter_mut().zip(&s_phi).for_each(|(p, &s)| *p = s + b * *p);
    }
    let mut psi = Array2::from_shape_vec((m, n), psi).expect("grid length");
    let mut phi = Array2::from_shape_vec((m, n), phi).expect("grid length");

    let xc = (n as f64 - 1.0) / 2.0;
    let yc = (m as f64 - 1.0) / 2.0;
    for ((i, j), p) in psi.indexed_iter_mut() {
        *p += mu * (j as f64 - xc) + mv * (i as f64 - yc);
    }
    for ((i, j), p) in phi.indexed_iter_mut() {
        *p += mu * (i as f64 - yc) - mv * (j as f64 - xc);
    }
    centered(&mut psi);
    centered(&mut phi);
    Ok(FlowPotentials { streamfunction: phi, potential: psi, mean_flow: [mu, mv], iterations })
}

/// Velocity field implied by the potentials: `∇Ψ + rot Φ` minus the mean
/// flow that both ramps carry.
pub fn reconstruct(p: &FlowPotentials) -> Result<VectorField> {
    let (mut u, mut v) = forward(&p.potential, &p.streamfunction);
    u.mapv_inplace(|x| x - p.mean_flow[0]);
    v.mapv_inplace(|x| x - p.mean_flow[1]);
    VectorField::new(u, v, 0.0, 0.0)
}
