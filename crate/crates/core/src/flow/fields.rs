use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    CentiKelvin,
    Kelvin,
    Meter,
    MeterPerSecond,
    PerSecond,
    Dimensionless,
}

/// An `M × N` grid of finite reals. Row `i` runs along the image y axis,
/// column `j` along the x axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    data: Array2<f64>,
    unit: Unit,
}

fn check_grid(data: &Array2<f64>) -> Result<()> {
    let (m, n) = data.dim();
    if m < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!("grid must be at least 2x2, got {m}x{n}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("grid contains non-finite values".into()));
    }
    Ok(())
}

impl ScalarField {
    pub fn new(data: Array2<f64>, unit: Unit) -> Result<Self> {
        check_grid(&data)?;
        Ok(Self { data, unit })
    }

    /// Builds a field from `f(i, j)`.
    pub fn from_fn(m: usize, n: usize, unit: Unit, f: impl FnMut((usize, usize)) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((m, n), f), unit)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }
}

/// Velocity components on a grid plus their RMS errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub e_u: f64,
    pub e_v: f64,
}

impl VectorField {
    pub fn new(u: Array2<f64>, v: Array2<f64>, e_u: f64, e_v: f64) -> Result<Self> {
        check_grid(&u)?;
        check_grid(&v)?;
        if u.dim() != v.dim() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
        }
        if !(e_u >= 0.0 && e_v >= 0.0) {
            return Err(Error::InvalidArgument("velocity errors must be nonnegative".into()));
        }
        Ok(Self { u, v, e_u, e_v })
    }

    /// Exact velocities from `f(i, j) -> (u, v)`.
    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Result<Self> {
        let mut u = Array2::zeros((m, n));
        let mut v = Array2::zeros((m, n));
        for i in 0..m {
            for j in 0..n {
                let (a, b) = f(i, j);
                u[[i, j]] = a;
                v[[i, j]] = b;
            }
        }
        Self::new(u, v, 0.0, 0.0)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.u.dim()
    }

    /// Velocities with both components negated.
    pub fn reversed(&self) -> Self {
        Self { u: -&self.u, v: -&self.v, e_u: self.e_u, e_v: self.e_v }
    }
}
