use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::noise::NoiseProcess;
use crate::reverse::{sample, EpsModel, SamplerConfig};
use crate::rng::{domain, stream};
use crate::stats::sliced_wasserstein_2d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingReport {
    pub sliced_w: f64,
    /// Share of generated points within 3σ of each mode.
    pub mode_fractions: Vec<f64>,
    pub min_mode_fraction: f64,
}

impl RingReport {
    pub fn passes(&self, max_sw: f64, min_fraction: f64) -> bool {
        self.sliced_w < max_sw && self.min_mode_fraction >= min_fraction
    }
}

/// Generates `n` points and compares them with `n` fresh ring samples.
pub fn evaluate_ring<M: EpsModel + ?Sized>(
    model: &M,
    process: &NoiseProcess,
    dataset: &Dataset,
    sampler: &SamplerConfig,
    n: usize,
    seed: u64,
) -> Result<RingReport> {
    let (centers, sd) = dataset
        .ring_modes()
        .ok_or_else(|| Error::invalid("ring evaluation needs the ring8 dataset"))?;
    let generated = sample(model, process, sampler, n, &mut stream(seed, domain::SAMPLE, 0))?.x0;
    let held_out = dataset.sample(n, &mut stream(seed, domain::HOLDOUT, 0));
    let sliced_w = sliced_wasserstein_2d(&generated, &held_out, 256, &mut stream(seed, domain::PROJECTION, 0))?;
    let radius = 3.0 * sd;
    let mode_fractions: Vec<f64> = centers
        .iter()
        .map(|c| {
            let hits = (0..n)
                .filter(|&i| {
                    let p = generated.row(i);
                    (p[0] - c[0]).hypot(p[1] - c[1]) <= radius
                })
                .count();
            hits as f64 / n as f64
        })
        .collect();
    let min_mode_fraction = mode_fractions.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RingReport {
        sliced_w,
        mode_fractions,
        min_mode_fraction,
    })
}
