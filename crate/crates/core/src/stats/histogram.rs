use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-width histogram with a density normalized to unit area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub density: Vec<f64>,
    /// All samples were equal; the histogram is a single unit-width bin.
    pub degenerate: bool,
}

impl Histogram {
    /// Bins spanning the observed range `[min, max]`.
    pub fn from_samples(x: &[f64], bins: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("histogram of an empty sample"));
        }
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("histogram input".into()));
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            let total = x.len() as u64;
            return Ok(Self {
                edges: vec![lo - 0.5, lo + 0.5],
                counts: vec![total],
                total,
                density: vec![1.0],
                degenerate: true,
            });
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();
        let mut counts = vec![0u64; bins];
        for v in x {
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let total = x.len() as u64;
        let density = counts
            .iter()
            .zip(edges.windows(2))
            .map(|(c, e)| *c as f64 / (total as f64 * (e[1] - e[0])))
            .collect();
        Ok(Self {
            edges,
            counts,
            total,
            density,
            degenerate: false,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.center(i)).collect()
    }

    /// `Σ density_i · width_i`; 1 up to rounding.
    pub fn area(&self) -> f64 {
        (0..self.bins()).map(|i| self.density[i] * self.width(i)).sum()
    }

    /// Mean, standard deviation and skewness of the binned distribution.
    pub fn binned_moments(&self) -> (f64, f64, f64) {
        let tot = self.total as f64;
        let mean = (0..self.bins())
            .map(|i| self.counts[i] as f64 * self.center(i))
            .sum::<f64>()
            / tot;
        let (mut m2, mut m3) = (0.0, 0.0);
        for i in 0..self.bins() {
            let d = self.center(i) - mean;
            let w = self.counts[i] as f64 / tot;
            m2 += w * d * d;
            m3 += w * d * d * d;
        }
        let std = m2.sqrt();
        let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        (mean, std, skew)
    }

    /// CSV with header `bin_left,bin_right,count,density`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,density\n");
        for i in 0..self.bins() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.edges[i],
                self.edges[i + 1],
                self.counts[i],
                self.density[i]
            );
        }
        out
    }
}
