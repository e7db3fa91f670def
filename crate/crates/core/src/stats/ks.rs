//! Two-sample Kolmogorov–Smirnov test with asymptotic p-values.

use crate::error::{Error, Result};

/// `(D, p)` where `D = sup |F_a - F_b|` over the pooled sample.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 100 || b.len() < 100 {
        return Err(Error::invalid(format!(
            "two-sample KS needs at least 100 draws per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let d = ks_statistic_sorted(&a, &b);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let en = (n * m / (n + m)).sqrt();
    Ok((d, kolmogorov_q((en + 0.12 + 0.11 / en) * d)))
}

fn ks_statistic_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{j-1} exp(-2 j² λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small λ
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|j| (c * ((2 * j - 1) * (2 * j - 1)) as f64).exp())
            .sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic critical value of `D` at level `alpha`:
/// `√(-ln(α/2)/2) · √((n+m)/(n m))`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-(alpha / 2.0).ln() / 2.0).sqrt() * ((n + m) / (n * m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, stream};
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_samples() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let (d, p) = ks_two_sample(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn shifted_uniforms() {
        let mut rng = stream(1, domain::VERIFY, 0);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
        let (d, p) = ks_two_sample(&a, &b).unwrap();
        assert!((d - 0.5).abs() < 0.01, "{d}");
        assert!(p < 1e-12);
    }

    #[test]
    fn same_normal_passes_at_one_percent() {
        let mut rng = stream(2, domain::VERIFY, 0);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let (d, p) = ks_two_sample(&a, &b).unwrap();
        let crit = ks_critical_value(n, n, 0.01);
        assert!((crit - 1.627_6 * (2.0 / n as f64).sqrt()).abs() < 1e-6);
        assert!(d < crit, "D={d} crit={crit}");
        assert!(p > 0.01);
    }

    #[test]
    fn survival_function_reference_points() {
        // Q(1.3581) ≈ 0.05 and Q(1.6276) ≈ 0.01, the usual tabulated points
        assert!((kolmogorov_q(1.358_1) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_q(1.627_6) - 0.01).abs() < 1e-4);
        // both series agree at the switch point
        let lo = kolmogorov_q(1.179_999_9);
        let hi = kolmogorov_q(1.18);
        assert!((lo - hi).abs() < 1e-6);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn symmetric_and_rejects_small_samples() {
        let mut rng = stream(3, domain::VERIFY, 0);
        let a: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 1.1).collect();
        assert_eq!(ks_two_sample(&a, &b).unwrap().0, ks_two_sample(&b, &a).unwrap().0);
        assert!(ks_two_sample(&a[..99], &b).is_err());
    }
}
