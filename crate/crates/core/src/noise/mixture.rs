use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-component, equal-variance Gaussian mixture with mean 0 and variance 1.
///
/// Component 1 is `N(m1, φ²)` with weight `p`, component 2 is `N(m2, φ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub p: f64,
    pub phi: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Component means that give the mixture zero mean and unit variance.
pub fn mixture_params(p: f64, phi: f64) -> Result<MixtureParams> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("mixture weight p must lie in (0, 1), got {p}")));
    }
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(Error::invalid(format!(
            "mixture component std phi must lie in (0, 1], got {phi}"
        )));
    }
    let q = 1.0 - p;
    let denom = p * q + p * p * p / q + 2.0 * p * p;
    let m1 = ((1.0 - phi * phi) / denom).sqrt();
    let m2 = if m1 == 0.0 { 0.0 } else { -(p / q) * m1 };
    Ok(MixtureParams { p, phi, m1, m2 })
}

impl MixtureParams {
    pub fn mean(&self) -> f64 {
        self.p * self.m1 + (1.0 - self.p) * self.m2
    }

    pub fn variance(&self) -> f64 {
        let second = self.p * (self.m1 * self.m1 + self.phi * self.phi)
            + (1.0 - self.p) * (self.m2 * self.m2 + self.phi * self.phi);
        second - self.mean() * self.mean()
    }

    /// One draw; the Bernoulli selector is consumed here.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let first = rng.random::<f64>() < self.p;
        let z: f64 = rng.sample(StandardNormal);
        let m = if first { self.m1 } else { self.m2 };
        m + self.phi * z
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let norm = |m: f64| {
            let z = (x - m) / self.phi;
            (-0.5 * z * z).exp() / (self.phi * (2.0 * std::f64::consts::PI).sqrt())
        };
        self.p * norm(self.m1) + (1.0 - self.p) * norm(self.m2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_phi_collapses_to_single_gaussian() {
        let m = mixture_params(0.5, 1.0).unwrap();
        assert_eq!(m.m1, 0.0);
        assert_eq!(m.m2, 0.0);
    }

    #[test]
    fn symmetric_half_phi() {
        let m = mixture_params(0.5, 0.5).unwrap();
        assert!((m.m1 - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((m.m2 + 0.75f64.sqrt()).abs() < 1e-15);
        assert!(m.mean().abs() < 1e-15);
        assert!((m.variance() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_weights() {
        let m = mixture_params(0.2, 0.6).unwrap();
        assert!((m.m1 - 1.6).abs() < 1e-14);
        assert!((m.m2 + 0.4).abs() < 1e-14);
        let second = 0.2 * (1.6f64.powi(2) + 0.36) + 0.8 * (0.4f64.powi(2) + 0.36);
        assert!((second - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(mixture_params(0.5, 1.01).is_err());
        assert!(mixture_params(0.5, 0.0).is_err());
        assert!(mixture_params(0.0, 0.5).is_err());
        assert!(mixture_params(1.0, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn zero_mean_unit_variance(p in 0.01f64..0.99, phi in 0.01f64..=1.0) {
            let m = mixture_params(p, phi).unwrap();
            prop_assert!(m.m1 >= 0.0);
            prop_assert_eq!(m.m2, -(p / (1.0 - p)) * m.m1);
            // exact two-component moment formulas
            let mean = p * m.m1 + (1.0 - p) * m.m2;
            let second = p * (m.m1 * m.m1 + phi * phi) + (1.0 - p) * (m.m2 * m.m2 + phi * phi);
            prop_assert!(mean.abs() < 1e-12);
            prop_assert!((second - 1.0).abs() < 1e-12);
            // simplified form of the denominator: m1² = (1 - φ²)(1 - p)/p
            let alt = ((1.0 - phi * phi) * (1.0 - p) / p).sqrt();
            prop_assert!((m.m1 - alt).abs() <= 1e-12 * alt.max(1.0));
        }
    }
}
