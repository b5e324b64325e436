//! Bath correlation kernels `K(t,s) = <g_t|g_s>`.
//!
//! A discrete bath is a list of modes `(omega_k, g_k)` plus a reference
//! frequency `omega_0`; its kernel is `sum_k |g_k|^2 exp(-i (omega_k - omega_0)(t - s))`.

mod continuum;
mod thermal;

pub use continuum::{discretize_continuum, ContinuumBathSpec, SpectralDensity};
pub use thermal::{bose_occupation, thermal_double, ThermalPair};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|Im K|` below which the quadrature processes are reported commuting.
pub const COMMUTING_TOL: f64 = 1e-12;

/// Anything that can be evaluated as a two-time correlation kernel.
pub trait CorrelationKernel: Sync {
    fn eval(&self, t: f64, s: f64) -> Result<Complex64>;

    /// `true` when `K(t,s)` depends on `t - s` only; lets solvers tabulate lags.
    fn is_stationary(&self) -> bool {
        false
    }
}

/// Finite set of bath oscillators with couplings `g_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBathSpec {
    frequencies: Vec<f64>,
    couplings: Vec<Complex64>,
    detuning: f64,
}

impl DiscreteBathSpec {
    pub fn new(frequencies: Vec<f64>, couplings: Vec<Complex64>, detuning: f64) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidBath("no modes".into()));
        }
        if frequencies.len() != couplings.len() {
            return Err(Error::InvalidBath(format!(
                "{} frequencies but {} couplings",
                frequencies.len(),
                couplings.len()
            )));
        }
        if frequencies
            .iter()
            .chain(std::iter::once(&detuning))
            .any(|w| !w.is_finite())
            || couplings.iter().any(|g| !g.is_finite())
        {
            return Err(Error::InvalidBath("non-finite parameter".into()));
        }
        let mut sorted = frequencies.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidBath("frequencies must be pairwise distinct".into()));
        }
        Ok(Self {
            frequencies,
            couplings,
            detuning,
        })
    }

    /// Modes with real couplings and zero detuning.
    pub fn from_real(frequencies: &[f64], couplings: &[f64]) -> Result<Self> {
        Self::new(
            frequencies.to_vec(),
            couplings.iter().map(|&g| Complex64::new(g, 0.0)).collect(),
            0.0,
        )
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn mode_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn couplings(&self) -> &[Complex64] {
        &self.couplings
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    /// Interaction-picture frequency `omega_k - omega_0`.
    pub fn shifted_frequency(&self, k: usize) -> f64 {
        self.frequencies[k] - self.detuning
    }

    /// Feature vector `g_t(k) = exp(i (omega_k - omega_0) t) g_k`.
    pub fn feature(&self, t: f64) -> Vec<Complex64> {
        (0..self.mode_count())
            .map(|k| self.couplings[k] * Complex64::from_polar(1.0, self.shifted_frequency(k) * t))
            .collect()
    }

    pub fn kernel(&self, t: f64, s: f64) -> Complex64 {
        let lag = t - s;
        self.frequencies
            .iter()
            .zip(&self.couplings)
            .map(|(&w, g)| g.norm_sqr() * Complex64::from_polar(1.0, -(w - self.detuning) * lag))
            .sum()
    }

    pub fn is_faithful(&self) -> bool {
        self.couplings.iter().all(|g| g.norm() > 0.0)
    }
}

impl CorrelationKernel for DiscreteBathSpec {
    fn eval(&self, t: f64, s: f64) -> Result<Complex64> {
        Ok(self.kernel(t, s))
    }

    fn is_stationary(&self) -> bool {
        true
    }
}

/// The kernel families the solvers dispatch on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelHandle {
    Discrete(DiscreteBathSpec),
    /// `gamma * delta(t - s)`.
    Markov {
        rate: f64,
    },
    /// Real test kernel `A exp(-kappa |t - s|)`.
    Exponential {
        amplitude: f64,
        decay: f64,
    },
    /// `min(t, s)`, the reference Mercer problem.
    Brownian,
}

impl KernelHandle {
    pub fn markov(rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidBath(format!("markov rate must be >= 0, got {rate}")));
        }
        Ok(Self::Markov { rate })
    }

    pub fn exponential(amplitude: f64, decay: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite() && decay > 0.0 && decay.is_finite()) {
            return Err(Error::InvalidBath(format!(
                "exponential kernel needs amplitude >= 0 and decay > 0, got ({amplitude}, {decay})"
            )));
        }
        Ok(Self::Exponential { amplitude, decay })
    }

    pub fn is_pointwise(&self) -> bool {
        !matches!(self, Self::Markov { .. })
    }
}

impl CorrelationKernel for KernelHandle {
    fn eval(&self, t: f64, s: f64) -> Result<Complex64> {
        match self {
            Self::Discrete(spec) => Ok(spec.kernel(t, s)),
            Self::Markov { .. } => Err(Error::DeltaKernel),
            Self::Exponential { amplitude, decay } => {
                Ok(Complex64::new(amplitude * (-decay * (t - s).abs()).exp(), 0.0))
            }
            Self::Brownian => BrownianKernel.eval(t, s),
        }
    }

    fn is_stationary(&self) -> bool {
        !matches!(self, Self::Brownian)
    }
}

/// Brownian-motion covariance `min(t, s)`; not a bath kernel, used as the
/// reference Mercer problem with known spectrum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BrownianKernel;

impl CorrelationKernel for BrownianKernel {
    fn eval(&self, t: f64, s: f64) -> Result<Complex64> {
        Ok(Complex64::new(t.min(s), 0.0))
    }
}

/// Drop modes with `|g_k| <= tol`. The flag is `true` when nothing was removed.
pub fn faithful_reduce(spec: &DiscreteBathSpec, tol: f64) -> Result<(DiscreteBathSpec, bool)> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {tol}")));
    }
    let (freqs, gs): (Vec<f64>, Vec<Complex64>) = spec
        .frequencies
        .iter()
        .zip(&spec.couplings)
        .filter(|(_, g)| g.norm() > tol)
        .map(|(&w, &g)| (w, g))
        .unzip();
    if freqs.is_empty() {
        return Err(Error::DecoupledBath);
    }
    let faithful = freqs.len() == spec.mode_count();
    Ok((
        DiscreteBathSpec {
            frequencies: freqs,
            couplings: gs,
            detuning: spec.detuning,
        },
        faithful,
    ))
}

/// `G(t,s) = (1/2 pi) sum_k |g_k|^-2 exp(-i (omega_k - omega_0)(t - s))`.
pub fn inverse_kernel_eval(spec: &DiscreteBathSpec, t: f64, s: f64) -> Result<Complex64> {
    if !spec.is_faithful() {
        return Err(Error::UnfaithfulCoupling);
    }
    let lag = t - s;
    let sum: Complex64 = (0..spec.mode_count())
        .map(|k| Complex64::from_polar(1.0, -spec.shifted_frequency(k) * lag) / spec.couplings[k].norm_sqr())
        .sum();
    Ok(sum / (2.0 * std::f64::consts::PI))
}

/// Finite-window form of the inverse-kernel Parseval identity.
///
/// For shifted frequencies on a commensurate grid with period `P`, one period
/// of the trajectory recovers the amplitude norm through
/// `sum_k |f_k|^2 = (2 pi / P^2) ∬_[0,P]^2 zeta(t) G(t,s) zeta(s)^* dt ds`.
/// `zeta` holds samples at `t_j = j P / M`, `j < M` (periodic rectangle rule,
/// exact for trigonometric polynomials resolved by the sampling).
pub fn windowed_parseval(spec: &DiscreteBathSpec, zeta: &[Complex64], period: f64) -> Result<f64> {
    if !(period > 0.0) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    for k in 0..spec.mode_count() {
        let cycles = spec.shifted_frequency(k) * period / two_pi;
        if (cycles - cycles.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mode {k} is not commensurate with period {period}"
            )));
        }
    }
    let m = zeta.len();
    if m == 0 {
        return Err(Error::LengthMismatch { expected: 1, found: 0 });
    }
    let h = period / m as f64;
    let mut total = Complex64::new(0.0, 0.0);
    for (i, zi) in zeta.iter().enumerate() {
        let ti = i as f64 * h;
        let mut row = Complex64::new(0.0, 0.0);
        for (j, zj) in zeta.iter().enumerate() {
            row += inverse_kernel_eval(spec, ti, j as f64 * h)? * zj.conj();
        }
        total += zi * row;
    }
    Ok((two_pi / (period * period) * h * h * total).re)
}

/// Commutators of the quadratures `X = (Z + Z^*)/2`, `Y = (Z - Z^*)/2i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureCommutators {
    /// `[X(t), X(s)] = [Y(t), Y(s)] = (i/2) Im K(t,s)`.
    pub xx: Complex64,
    /// `[X(t), Y(s)] = (1/2i) Re K(t,s)`.
    pub xy: Complex64,
    pub commuting: bool,
}

pub fn quadrature_commutators(kernel: &impl CorrelationKernel, t: f64, s: f64) -> Result<QuadratureCommutators> {
    let k = kernel.eval(t, s)?;
    Ok(QuadratureCommutators {
        xx: Complex64::new(0.0, 0.5 * k.im),
        xy: Complex64::new(0.0, -0.5 * k.re),
        commuting: k.im.abs() <= COMMUTING_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn spec_invariants_enforced() {
        assert!(DiscreteBathSpec::from_real(&[], &[]).is_err());
        assert!(DiscreteBathSpec::from_real(&[1.0, 2.0], &[1.0]).is_err());
        assert!(DiscreteBathSpec::from_real(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(DiscreteBathSpec::from_real(&[1.0, 2.0], &[1.0, 2.0]).is_ok());
    }

    #[test]
    fn single_resonant_mode_is_constant() {
        let spec = DiscreteBathSpec::from_real(&[0.0], &[1.0]).unwrap();
        for (t, s) in [(0.0, 0.0), (1.3, -2.0), (5.0, 0.25)] {
            assert_eq!(spec.kernel(t, s), c(1.0, 0.0));
        }
    }

    #[test]
    fn two_mode_cancellation() {
        let spec = DiscreteBathSpec::from_real(&[0.0, PI], &[1.0, 1.0]).unwrap();
        assert!(spec.kernel(1.0, 0.0).norm() < 1e-15);
        assert!(spec.kernel(3.5, 2.5).norm() < 1e-14);
    }

    #[test]
    fn detuning_shifts_the_phase() {
        let spec = DiscreteBathSpec::from_real(&[2.0], &[1.0]).unwrap().with_detuning(2.0);
        assert!((spec.kernel(3.0, 0.0) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn markov_kernel_has_no_pointwise_value() {
        let h = KernelHandle::markov(1.0).unwrap();
        assert_eq!(h.eval(0.0, 0.0), Err(Error::DeltaKernel));
        assert!(KernelHandle::markov(-1.0).is_err());
        assert!(KernelHandle::exponential(1.0, 0.0).is_err());
    }

    #[test]
    fn faithful_reduce_examples() {
        let spec = DiscreteBathSpec::from_real(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).unwrap();
        let (red, faithful) = faithful_reduce(&spec, 0.0).unwrap();
        assert!(!faithful);
        assert_eq!(red.frequencies(), &[1.0, 3.0]);
        let spec = DiscreteBathSpec::from_real(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        let (red, faithful) = faithful_reduce(&spec, 0.0).unwrap();
        assert!(faithful);
        assert_eq!(red, spec);
        let zero = DiscreteBathSpec::from_real(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(faithful_reduce(&zero, 0.0), Err(Error::DecoupledBath));
    }

    #[test]
    fn inverse_kernel_examples() {
        let spec = DiscreteBathSpec::from_real(&[0.7], &[1.0]).unwrap();
        let g0 = inverse_kernel_eval(&spec, 0.4, 0.4).unwrap();
        assert!((g0 - c(1.0 / (2.0 * PI), 0.0)).norm() < 1e-15);
        let spec = DiscreteBathSpec::from_real(&[0.5, 1.5], &[2.0, 0.5]).unwrap();
        let g0 = inverse_kernel_eval(&spec, 1.0, 1.0).unwrap();
        assert!((g0.re - (0.25 + 4.0) / (2.0 * PI)).abs() < 1e-14);
        assert_eq!(g0.im, 0.0);
        let bad = DiscreteBathSpec::from_real(&[0.5, 1.5], &[2.0, 0.0]).unwrap();
        assert_eq!(inverse_kernel_eval(&bad, 0.0, 0.0), Err(Error::UnfaithfulCoupling));
    }

    #[test]
    fn commutator_examples() {
        let spec = KernelHandle::Discrete(DiscreteBathSpec::from_real(&[1.0], &[1.0]).unwrap());
        let eq = quadrature_commutators(&spec, 0.3, 0.3).unwrap();
        assert_eq!(eq.xx, c(0.0, 0.0));
        assert!((eq.xy - c(1.0, 0.0) / c(0.0, 2.0)).norm() < 1e-15);
        let lag = quadrature_commutators(&spec, 1.0, 0.0).unwrap();
        assert!((lag.xx.im - 0.5 * (-(1.0f64).sin())).abs() < 1e-15);
        assert!(!lag.commuting);
    }
}
