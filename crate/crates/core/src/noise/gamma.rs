//! Gamma variates by Marsaglia and Tsang's squeeze-rejection method.
//!
//! Shapes below one draw at `k + 1` and multiply by `U^{1/k}`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One draw from `Γ(k, θ)` (shape `k`, scale `θ`).
pub fn gamma_variate<R: Rng + ?Sized>(k: f64, theta: f64, rng: &mut R) -> Result<f64> {
    check(k, theta)?;
    Ok(sample(k, theta, rng))
}

pub(crate) fn check(k: f64, theta: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite() && theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma needs positive finite shape and scale, got k={k}, theta={theta}"
        )));
    }
    Ok(())
}

pub(crate) fn sample<R: Rng + ?Sized>(k: f64, theta: f64, rng: &mut R) -> f64 {
    centered(k, theta, rng) + k * theta
}

/// Draws `g - kθ` for `g ~ Γ(k, θ)`.
///
/// For `k ≥ 1` the centering is folded into the accepted variate as
/// `θ (d (v - 1) - 1/3)`, so no precision is lost to cancellation when
/// `k` is in the millions and `θ` is tiny.
pub(crate) fn centered<R: Rng + ?Sized>(k: f64, theta: f64, rng: &mut R) -> f64 {
    if k < 1.0 {
        let boosted = centered(k + 1.0, theta, rng) + (k + 1.0) * theta;
        let u: f64 = open01(rng);
        return boosted * u.powf(1.0 / k) - k * theta;
    }
    let d = k - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let w = c * x;
        if w <= -1.0 {
            continue;
        }
        // v = (1 + w)^3, kept as v - 1 for precision
        let v_minus_1 = w * (3.0 + w * (3.0 + w));
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2
            || u.ln() < 0.5 * x2 + d * (3.0 * w.ln_1p() - v_minus_1)
        {
            return theta * (d * v_minus_1 - 1.0 / 3.0);
        }
    }
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};
    use crate::stats::Moments;

    fn draws(k: f64, theta: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, domain::VERIFY, 0);
        (0..n).map(|_| gamma_variate(k, theta, &mut rng).unwrap()).collect()
    }

    #[test]
    fn moments_shape_two_scale_three() {
        let n = 1_000_000;
        let m = Moments::of(&draws(2.0, 3.0, n, 1));
        assert!((m.mean - 6.0).abs() < 5.0 * m.se_mean, "{m:?}");
        // Var = kθ² = 18; stderr from the fourth central moment
        assert!((m.var - 18.0).abs() < 5.0 * m.se_var, "{m:?}");
    }

    #[test]
    fn exponential_tail() {
        let n = 1_000_000;
        let x = draws(1.0, 1.0, n, 2);
        let frac = x.iter().filter(|v| **v > 1.0).count() as f64 / n as f64;
        let p = (-1.0f64).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((frac - p).abs() < 3.0 * se, "{frac}");
    }

    #[test]
    fn shape_below_one() {
        let n = 1_000_000;
        let m = Moments::of(&draws(0.5, 2.0, n, 3));
        assert!((m.mean - 1.0).abs() < 5.0 * m.se_mean, "{m:?}");
        assert!((m.var - 2.0).abs() < 5.0 * m.se_var, "{m:?}");
        assert!(draws(0.5, 2.0, 10_000, 4).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn huge_shape_centered_draws_keep_precision() {
        // k = 5e8, θ chosen so the variance kθ² is 1
        let k: f64 = 5e8;
        let theta = 1.0 / k.sqrt();
        let mut rng = stream(5, domain::VERIFY, 0);
        let x: Vec<f64> = (0..200_000).map(|_| centered(k, theta, &mut rng)).collect();
        let m = Moments::of(&x);
        assert!(m.mean.abs() < 5.0 * m.se_mean);
        assert!((m.var - 1.0).abs() < 0.02);
    }

    #[test]
    fn rejects_non_positive_parameters() {
        let mut rng = stream(0, domain::VERIFY, 0);
        assert!(gamma_variate(0.0, 1.0, &mut rng).is_err());
        assert!(gamma_variate(1.0, -1.0, &mut rng).is_err());
        assert!(gamma_variate(f64::NAN, 1.0, &mut rng).is_err());
    }
}
