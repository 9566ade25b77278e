use ndarray::{Array2, Zip};

use super::dynamics::{diff_x, diff_y};
use super::fields::VectorField;
use crate::error::{Error, Result};

/// Dense two-frame flow in pixels per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticalFlow {
    pub field: VectorField,
    /// Windows whose structure tensor was well conditioned.
    pub reliable: Array2<bool>,
}

/// Least-squares gradient flow on square windows (5×5 for `half = 2`).
///
/// Each window solves `[ΣIx² ΣIxIy; ΣIxIy ΣIy²] (u, v) = −(ΣIxIt, ΣIyIt)`.
/// Windows whose smaller structure-tensor eigenvalue is below `min_eigen`
/// take the mean of the reliable vectors (zero if there are none). The RMS
/// errors come from the least-squares residual of the reliable windows.
pub fn optical_flow(
    prev: &Array2<f64>,
    next: &Array2<f64>,
    half: usize,
    min_eigen: f64,
) -> Result<OpticalFlow> {
    if prev.dim() != next.dim() {
        return Err(Error::DimensionMismatch { expected: prev.len(), got: next.len() });
    }
    let (m, n) = prev.dim();
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument("frames must be at least 2x2".into()));
    }
    let avg = (prev + next) * 0.5;
    let ix = diff_x(&avg);
    let iy = diff_y(&avg);
    let it = next - prev;

    let mut u = Array2::zeros((m, n));
    let mut v = Array2::zeros((m, n));
    let mut reliable = Array2::from_elem((m, n), false);
    let (mut var_u, mut var_v, mut count) = (0.0, 0.0, 0usize);
    for i in 0..m {
        for j in 0..n {
            let (i0, i1) = (i.saturating_sub(half), (i + half).min(m - 1));
            let (j0, j1) = (j.saturating_sub(half), (j + half).min(n - 1));
            let (mut a, mut b, mut c, mut p, mut q) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in i0..=i1 {
                for s in j0..=j1 {
                    let (gx, gy, gt) = (ix[[r, s]], iy[[r, s]], it[[r, s]]);
                    a += gx * gx;
                    b += gx * gy;
                    c += gy * gy;
                    p += gx * gt;
                    q += gy * gt;
                }
            }
            let tr = a + c;
            let small = 0.5 * (tr - ((a - c).powi(2) + 4.0 * b * b).sqrt());
            if !(small > min_eigen) {
                continue;
            }
            let det = a * c - b * b;
            let (du, dv) = (-(c * p - b * q) / det, -(a * q - b * p) / det);
            u[[i, j]] = du;
            v[[i, j]] = dv;
            reliable[[i, j]] = true;
            let cells = (i1 - i0 + 1) * (j1 - j0 + 1);
            if cells > 2 {
                let mut ss = 0.0;
                for r in i0..=i1 {
                    for s in j0..=j1 {
                        ss += (ix[[r, s]] * du + iy[[r, s]] * dv + it[[r, s]]).powi(2);
                    }
                }
                let sigma2 = ss / (cells - 2) as f64;
                var_u += sigma2 * c / det;
                var_v += sigma2 * a / det;
                count += 1;
            }
        }
    }
    let n_ok = reliable.iter().filter(|&&r| r).count();
    if n_ok > 0 && n_ok < m * n {
        let mu = u.sum() / n_ok as f64;
        let mv = v.sum() / n_ok as f64;
        Zip::from(&reliable).and(&mut u).and(&mut v).for_each(|&ok, uu, vv| {
            if !ok {
                *uu = mu;
                *vv = mv;
            }
        });
    }
    let (e_u, e_v) = if count > 0 {
        ((var_u / count as f64).sqrt(), (var_v / count as f64).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(OpticalFlow { field: VectorField::new(u, v, e_u, e_v)?, reliable })
}
