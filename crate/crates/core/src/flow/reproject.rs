use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Plane coordinates (East, North) in meters relative to the Sun pixel and
/// per-pixel cell extents along columns (`dx`) and rows (`dy`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reprojection {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub dx: Array2<f64>,
    pub dy: Array2<f64>,
}

/// Pinhole camera pointed at the Sun. The optical axis is the Sun direction,
/// the image center `((M−1)/2, (N−1)/2)` is the Sun pixel, columns run along
/// the horizontal axis perpendicular to the azimuth and `fov` is the diagonal
/// field of view. Every pixel ray is intersected with the plane `z = h`.
pub fn reproject_pixels(
    m: usize,
    n: usize,
    elevation: f64,
    azimuth: f64,
    height: f64,
    fov: f64,
) -> Result<Reprojection> {
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!("grid must be at least 2x2, got {m}x{n}")));
    }
    if !(elevation > 0.0 && elevation <= 90.0) {
        return Err(Error::InvalidHyperparameter { name: "elevation", value: elevation });
    }
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::InvalidHyperparameter { name: "height", value: height });
    }
    if !(fov > 0.0 && fov < 180.0) {
        return Err(Error::InvalidHyperparameter { name: "fov", value: fov });
    }
    let (e, a) = (elevation.to_radians(), azimuth.to_radians());
    let d = [e.cos() * a.sin(), e.cos() * a.cos(), e.sin()];
    let r = [a.cos(), -a.sin(), 0.0];
    let s = [e.sin() * a.sin(), e.sin() * a.cos(), -e.cos()];
    let f = ((m * m + n * n) as f64).sqrt() / 2.0 / (fov.to_radians() / 2.0).tan();
    let (ic, jc) = ((m as f64 - 1.0) / 2.0, (n as f64 - 1.0) / 2.0);
    let sun = [height * d[0] / d[2], height * d[1] / d[2]];

    let hit = |i: f64, j: f64| -> Result<[f64; 2]> {
        let ray: [f64; 3] =
            std::array::from_fn(|k| f * d[k] + (j - jc) * r[k] + (i - ic) * s[k]);
        if ray[2] <= 1e-12 * f {
            return Err(Error::InvalidArgument(format!(
                "pixel ray ({i}, {j}) does not reach the layer plane"
            )));
        }
        let t = height / ray[2];
        Ok([t * ray[0] - sun[0], t * ray[1] - sun[1]])
    };
    let dist = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);

    let mut out = Reprojection {
        x: Array2::zeros((m, n)),
        y: Array2::zeros((m, n)),
        dx: Array2::zeros((m, n)),
        dy: Array2::zeros((m, n)),
    };
    for i in 0..m {
        for j in 0..n {
            let (fi, fj) = (i as f64, j as f64);
            let p = hit(fi, fj)?;
            out.x[[i, j]] = p[0];
            out.y[[i, j]] = p[1];
            out.dx[[i, j]] = dist(hit(fi, fj + 0.5)?, hit(fi, fj - 0.5)?);
            out.dy[[i, j]] = dist(hit(fi + 0.5, fj)?, hit(fi - 0.5, fj)?);
        }
    }
    Ok(out)
}
