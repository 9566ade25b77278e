use ndarray::Array2;

use super::fields::{ScalarField, Unit, VectorField};
use crate::error::{Error, Result};

/// `∂f/∂x` along columns: central differences inside, one-sided on the
/// first and last column. Unit grid spacing.
pub fn diff_x(f: &Array2<f64>) -> Array2<f64> {
    let (m, n) = f.dim();
    Array2::from_shape_fn((m, n), |(i, j)| {
        if j == 0 {
            f[[i, 1]] - f[[i, 0]]
        } else if j == n - 1 {
            f[[i, n - 1]] - f[[i, n - 2]]
        } else {
            0.5 * (f[[i, j + 1]] - f[[i, j - 1]])
        }
    })
}

/// `∂f/∂y` along rows, same stencil as [`diff_x`].
pub fn diff_y(f: &Array2<f64>) -> Array2<f64> {
    let (m, n) = f.dim();
    Array2::from_shape_fn((m, n), |(i, j)| {
        if i == 0 {
            f[[1, j]] - f[[0, j]]
        } else if i == m - 1 {
            f[[m - 1, j]] - f[[m - 2, j]]
        } else {
            0.5 * (f[[i + 1, j]] - f[[i - 1, j]])
        }
    })
}

/// Speed `√(u² + v²)`, divergence `u_x + v_y` and vorticity `v_x − u_y`
/// in units of the velocity per pixel.
pub fn cloud_dynamics(v: &VectorField) -> Result<(ScalarField, ScalarField, ScalarField)> {
    let speed = Array2::from_shape_fn(v.dim(), |(i, j)| v.u[[i, j]].hypot(v.v[[i, j]]));
    let div = diff_x(&v.u) + diff_y(&v.v);
    let curl = diff_x(&v.v) - diff_y(&v.u);
    Ok((
        ScalarField::new(speed, Unit::MeterPerSecond)?,
        ScalarField::new(div, Unit::PerSecond)?,
        ScalarField::new(curl, Unit::PerSecond)?,
    ))
}

/// Heights `(T − T_air) / Γ` in meters. Temperatures in centi-Kelvin are
/// converted to Kelvin first; `lapse_rate` is in K/m (negative in the
/// troposphere).
pub fn cloud_height(temperature: &ScalarField, t_air: f64, lapse_rate: f64) -> Result<ScalarField> {
    if lapse_rate == 0.0 || !lapse_rate.is_finite() {
        return Err(Error::InvalidHyperparameter { name: "lapse_rate", value: lapse_rate });
    }
    let scale = match temperature.unit() {
        Unit::CentiKelvin => 0.01,
        Unit::Kelvin => 1.0,
        other => {
            return Err(Error::InvalidArgument(format!("temperature field has unit {other:?}")))
        }
    };
    let h = temperature.data().mapv(|t| (t * scale - t_air) / lapse_rate);
    ScalarField::new(h, Unit::Meter)
}

/// Saturated (moist) adiabatic lapse rate in K/m, returned negative.
///
/// Standard pseudo-adiabat evaluated at the air temperature with the
/// mixing ratio implied by the dew point (Bolton's vapour-pressure fit).
/// Temperatures in K, pressure in hPa.
pub fn moist_adiabatic_lapse_rate(t_air: f64, t_dew: f64, pressure: f64) -> f64 {
    const G: f64 = 9.80665;
    const CP: f64 = 1004.0;
    const RD: f64 = 287.04;
    const LV: f64 = 2.501e6;
    const EPS: f64 = 0.622;
    let td = t_dew - 273.15;
    let e = 6.112 * (17.67 * td / (td + 243.5)).exp();
    let r = EPS * e / (pressure - e);
    let num = 1.0 + LV * r / (RD * t_air);
    let den = CP + LV * LV * r * EPS / (RD * t_air * t_air);
    -G * num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_field_has_no_divergence_or_vorticity() {
        let v = VectorField::from_fn(5, 6, |_, _| (1.5, -0.7)).unwrap();
        let (m, d, c) = cloud_dynamics(&v).unwrap();
        assert!(d.data().iter().all(|&x| x == 0.0));
        assert!(c.data().iter().all(|&x| x == 0.0));
        assert_relative_eq!(m.get(2, 2), 1.5f64.hypot(0.7));
    }

    #[test]
    fn linear_fields_are_exact_inside() {
        let v = VectorField::from_fn(6, 7, |i, j| (j as f64, i as f64)).unwrap();
        let (_, d, _) = cloud_dynamics(&v).unwrap();
        let w = VectorField::from_fn(6, 7, |i, j| (-(i as f64), j as f64)).unwrap();
        let (_, _, c) = cloud_dynamics(&w).unwrap();
        for i in 1..5 {
            for j in 1..6 {
                assert_eq!(d.get(i, j), 2.0);
                assert_eq!(c.get(i, j), 2.0);
            }
        }
    }

    #[test]
    fn height_examples() {
        let t = ScalarField::from_fn(2, 2, Unit::Kelvin, |_| 280.0).unwrap();
        assert!(cloud_height(&t, 280.0, -6.5e-3).unwrap().data().iter().all(|&h| h == 0.0));
        let t = ScalarField::from_fn(2, 2, Unit::Kelvin, |_| 280.0 - 6.5).unwrap();
        let h = cloud_height(&t, 280.0, -6.5e-3).unwrap();
        assert_relative_eq!(h.get(0, 0), 1000.0, epsilon = 1e-9);
        let t2 = ScalarField::from_fn(2, 2, Unit::Kelvin, |_| 280.0 - 13.0).unwrap();
        assert_relative_eq!(cloud_height(&t2, 280.0, -6.5e-3).unwrap().get(1, 1), 2000.0, epsilon = 1e-9);
        let ck = ScalarField::from_fn(2, 2, Unit::CentiKelvin, |_| 27350.0).unwrap();
        assert_relative_eq!(cloud_height(&ck, 280.0, -6.5e-3).unwrap().get(0, 1), 1000.0, epsilon = 1e-9);
        assert!(cloud_height(&t, 280.0, 0.0).is_err());
    }

    #[test]
    fn moist_lapse_rate_is_between_wet_and_dry_limits() {
        let warm = moist_adiabatic_lapse_rate(298.15, 293.15, 1000.0);
        let cold = moist_adiabatic_lapse_rate(263.15, 258.15, 700.0);
        assert!(warm < 0.0 && warm > -9.8e-3);
        assert!(warm > cold, "warm saturated air cools more slowly");
        assert!((warm + 4.0e-3).abs() < 1.5e-3, "warm value {warm}");
    }
}
