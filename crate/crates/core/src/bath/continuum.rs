use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DiscreteBathSpec;
use crate::error::{Error, Result};

/// Spectral density families `J(omega)`, `omega >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SpectralDensity {
    /// `eta * omega * exp(-omega / cutoff)`
    Ohmic { eta: f64, cutoff: f64 },
    /// `eta * width^2 / ((omega - center)^2 + width^2)`
    Lorentzian { eta: f64, center: f64, width: f64 },
    /// `eta` on `[0, omega_max]`, zero beyond.
    Flat { eta: f64, omega_max: f64 },
}

impl SpectralDensity {
    pub fn eval(&self, omega: f64) -> f64 {
        if omega < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Ohmic { eta, cutoff } => eta * omega * (-omega / cutoff).exp(),
            Self::Lorentzian { eta, center, width } => eta * width * width / ((omega - center).powi(2) + width * width),
            Self::Flat { eta, omega_max } => {
                if omega <= omega_max {
                    eta
                } else {
                    0.0
                }
            }
        }
    }
}

/// Caldeira-Leggett bath described by its spectral density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumBathSpec {
    pub density: SpectralDensity,
}

impl ContinuumBathSpec {
    pub fn new(density: SpectralDensity) -> Self {
        Self { density }
    }
}

/// Midpoint discretization: `omega_k = (k - 1/2) d_omega`, `g_k = sqrt(J(omega_k) d_omega / pi)`.
///
/// The resulting kernel is the midpoint Riemann sum of
/// `(1/pi) ∫_0^omega_max J(omega) exp(-i omega (t - s)) d omega`.
pub fn discretize_continuum(spec: &ContinuumBathSpec, n_modes: usize, omega_max: f64) -> Result<DiscreteBathSpec> {
    if n_modes == 0 {
        return Err(Error::InvalidArgument("n_modes must be >= 1".into()));
    }
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "omega_max must be positive, got {omega_max}"
        )));
    }
    let d_omega = omega_max / n_modes as f64;
    let mut freqs = Vec::with_capacity(n_modes);
    let mut gs = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let omega = (k as f64 + 0.5) * d_omega;
        let j = spec.density.eval(omega);
        if !(j >= 0.0) {
            return Err(Error::InvalidSpectralDensity { omega, value: j });
        }
        freqs.push(omega);
        gs.push(Complex64::new((j * d_omega / std::f64::consts::PI).sqrt(), 0.0));
    }
    DiscreteBathSpec::new(freqs, gs, 0.0)
}
