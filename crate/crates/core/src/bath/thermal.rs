use serde::{Deserialize, Serialize};

use super::DiscreteBathSpec;
use crate::error::{Error, Result};

/// A thermal bath represented as two vacuum baths (spontaneous and stimulated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalPair {
    /// Couplings `sqrt(n + 1) g`.
    pub spontaneous: DiscreteBathSpec,
    /// Couplings `sqrt(n) g^*`.
    pub stimulated: DiscreteBathSpec,
    pub temperature: f64,
}

/// Bose-Einstein occupation `1 / (exp(omega / kT) - 1)`.
pub fn bose_occupation(omega: f64, kt: f64) -> f64 {
    1.0 / (omega / kt).exp_m1()
}

pub fn thermal_double(spec: &DiscreteBathSpec, kt: f64) -> Result<ThermalPair> {
    if !(kt > 0.0 && kt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {kt}"
        )));
    }
    if let Some(&w) = spec.frequencies().iter().find(|&&w| !(w > 0.0)) {
        return Err(Error::ThermalOccupation(w));
    }
    let occupations: Vec<f64> = spec.frequencies().iter().map(|&w| bose_occupation(w, kt)).collect();
    let g1 = spec
        .couplings()
        .iter()
        .zip(&occupations)
        .map(|(g, n)| g * (n + 1.0).sqrt())
        .collect();
    let g2 = spec
        .couplings()
        .iter()
        .zip(&occupations)
        .map(|(g, n)| g.conj() * n.sqrt())
        .collect();
    Ok(ThermalPair {
        spontaneous: DiscreteBathSpec::new(spec.frequencies().to_vec(), g1, spec.detuning())?,
        stimulated: DiscreteBathSpec::new(spec.frequencies().to_vec(), g2, spec.detuning())?,
        temperature: kt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn unit_occupation_at_ln2() {
        let w = 2.0f64.ln();
        let spec = DiscreteBathSpec::new(vec![w], vec![Complex64::new(0.6, -0.8)], 0.0).unwrap();
        let pair = thermal_double(&spec, 1.0).unwrap();
        assert!((pair.spontaneous.couplings()[0].norm() - 2f64.sqrt()).abs() < 1e-14);
        assert!((pair.stimulated.couplings()[0].norm() - 1.0).abs() < 1e-14);
        assert!((pair.stimulated.couplings()[0] - Complex64::new(0.6, 0.8)).norm() < 1e-14);
    }

    #[test]
    fn vacuum_limit() {
        let spec = DiscreteBathSpec::from_real(&[0.5, 1.0, 2.0], &[1.0, 0.5, 2.0]).unwrap();
        let pair = thermal_double(&spec, 0.5 / 100.0).unwrap();
        for (g1, g) in pair.spontaneous.couplings().iter().zip(spec.couplings()) {
            assert!((g1 - g).norm() < 1e-15);
        }
        assert!(pair.stimulated.couplings().iter().all(|g| g.norm() < 1e-20));
    }

    #[test]
    fn zero_frequency_rejected() {
        let spec = DiscreteBathSpec::from_real(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(thermal_double(&spec, 1.0), Err(Error::ThermalOccupation(0.0)));
        let spec = DiscreteBathSpec::from_real(&[1.0], &[1.0]).unwrap();
        assert!(thermal_double(&spec, 0.0).is_err());
    }
}
