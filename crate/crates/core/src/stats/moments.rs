use crate::error::{Error, Result};

/// Sample moments with their standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased variance.
    pub var: f64,
    /// Sample skewness `m3 / m2^{3/2}`.
    pub skew: f64,
    pub se_mean: f64,
    /// Large-sample stderr of the variance, `√((m4 - m2²)/n)`.
    pub se_var: f64,
    /// Normal-theory stderr of the skewness, `√(6/n)`.
    pub se_skew: f64,
}

impl Moments {
    /// Two-pass estimate over a slice. Panics on an empty slice.
    pub fn of(x: &[f64]) -> Self {
        assert!(!x.is_empty(), "moments of an empty sample");
        let n = x.len();
        let nf = n as f64;
        let mean = x.iter().sum::<f64>() / nf;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in x {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        m2 /= nf;
        m3 /= nf;
        m4 /= nf;
        let var = if n > 1 { m2 * nf / (nf - 1.0) } else { 0.0 };
        let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        Self {
            n,
            mean,
            var,
            skew,
            se_mean: (var / nf).sqrt(),
            se_var: ((m4 - m2 * m2).max(0.0) / nf).sqrt(),
            se_skew: (6.0 / nf).sqrt(),
        }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Draws `n` values from `sampler` and summarizes them.
pub fn mc_moments(mut sampler: impl FnMut() -> f64, n: usize) -> Result<Moments> {
    if n < 1000 {
        return Err(Error::invalid(format!("mc_moments needs n >= 1000, got {n}")));
    }
    let x: Vec<f64> = (0..n).map(|_| sampler()).collect();
    Ok(Moments::of(&x))
}
