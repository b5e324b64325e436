//! Uniform time grids on `[0, T]` with trapezoidal quadrature weights.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n_points` equally spaced nodes `t_i = i T / (N - 1)` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_points: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_points: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n_points}")));
        }
        Ok(Self { horizon, n_points })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Trapezoidal weights; they sum to `T`.
    pub fn weights(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut w = vec![dt; self.n_points];
        w[0] = 0.5 * dt;
        w[self.n_points - 1] = 0.5 * dt;
        w
    }

    /// The sub-grid `t_0..=t_index`, i.e. the running horizon `[0, t_index]`.
    pub fn prefix(&self, index: usize) -> Result<Self> {
        if index == 0 || index >= self.n_points {
            return Err(Error::InvalidGrid(format!(
                "prefix index {index} outside 1..{}",
                self.n_points
            )));
        }
        Ok(Self {
            horizon: self.point(index),
            n_points: index + 1,
        })
    }

    /// Index of the node nearest to `t`, or an error when `t` lies outside `[0, T]`.
    pub fn locate(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.horizon;
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(((t / self.dt()).round() as usize).min(self.n_points - 1))
    }

    /// Bracketing interval and linear-interpolation weight for `t`.
    pub(crate) fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let tol = 1e-12 * self.horizon;
        if !(t >= -tol && t <= self.horizon + tol) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let x = (t / self.dt()).clamp(0.0, (self.n_points - 1) as f64);
        let i = (x.floor() as usize).min(self.n_points - 2);
        Ok((i, x - i as f64))
    }

    pub(crate) fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_points == other.n_points && (self.horizon - other.horizon).abs() <= 1e-12 * self.horizon
    }
}

/// Cumulative trapezoid `∫_0^{t_n} y dt` for every node.
pub fn cumulative_trapezoid(values: &[Complex64], dt: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = Complex64::new(0.0, 0.0);
    out.push(acc);
    for pair in values.windows(2) {
        acc += 0.5 * dt * (pair[0] + pair[1]);
        out.push(acc);
    }
    out
}

/// Trapezoid over the first `n + 1` samples (`∫_0^{t_n}`).
pub fn trapezoid_prefix(values: &[Complex64], n: usize, dt: f64) -> Complex64 {
    if n == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let interior: Complex64 = values[1..n].iter().sum();
    dt * (0.5 * (values[0] + values[n]) + interior)
}
