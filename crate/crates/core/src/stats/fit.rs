//! Least-squares fits of parametric densities to histograms.
//!
//! The objective is the mean squared difference between the histogram
//! density and the fitted pdf at the bin centers. Each family is optimized in
//! coordinates scaled by the histogram's own mean and spread, by coordinate
//! descent with a coarse grid scan followed by golden-section refinement
//! along every axis.

use serde::{Deserialize, Serialize};

use super::special::gamma_log_normalizer;
use super::Histogram;
use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;
const MAX_SWEEPS: usize = 200;
const GRID: usize = 6;
const GOLDEN_ITERS: usize = 24;
const MIN_SHAPE: f64 = 0.05;
const MAX_SHAPE: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitFamily {
    Gaussian,
    Mixture,
    Gamma,
}

impl FitFamily {
    pub const ALL: [FitFamily; 3] = [FitFamily::Gaussian, FitFamily::Mixture, FitFamily::Gamma];

    pub fn name(self) -> &'static str {
        match self {
            FitFamily::Gaussian => "gaussian",
            FitFamily::Mixture => "mixture",
            FitFamily::Gamma => "gamma",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(FitFamily::Gaussian),
            "mixture" => Ok(FitFamily::Mixture),
            "gamma" => Ok(FitFamily::Gamma),
            other => Err(Error::invalid(format!("unknown fit family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FitParams {
    Gaussian { mu: f64, sigma: f64 },
    Mixture { m1: f64, m2: f64, phi: f64, p: f64 },
    /// `shift + Γ(k, θ)`.
    Gamma { k: f64, theta: f64, shift: f64 },
}

impl FitParams {
    pub fn family(&self) -> FitFamily {
        match self {
            FitParams::Gaussian { .. } => FitFamily::Gaussian,
            FitParams::Mixture { .. } => FitFamily::Mixture,
            FitParams::Gamma { .. } => FitFamily::Gamma,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        Density::new(self).at(x)
    }
}

/// A density with its per-parameter constants computed once.
enum Density {
    Normal { mu: f64, inv_sigma: f64, norm: f64 },
    Mixture { a: (f64, f64), b: (f64, f64), inv_phi: f64 },
    Gamma { mean: f64, inv_std: f64, sqrt_k: f64, k: f64, log_c: f64 },
}

impl Density {
    fn new(params: &FitParams) -> Self {
        match *params {
            FitParams::Gaussian { mu, sigma } => Density::Normal {
                mu,
                inv_sigma: 1.0 / sigma,
                norm: 1.0 / (sigma * SQRT_2PI),
            },
            FitParams::Mixture { m1, m2, phi, p } => Density::Mixture {
                a: (m1, p / (phi * SQRT_2PI)),
                b: (m2, (1.0 - p) / (phi * SQRT_2PI)),
                inv_phi: 1.0 / phi,
            },
            FitParams::Gamma { k, theta, shift } => {
                let std = theta * k.sqrt();
                Density::Gamma {
                    mean: shift + k * theta,
                    inv_std: 1.0 / std,
                    sqrt_k: k.sqrt(),
                    k,
                    log_c: gamma_log_normalizer(k) + 0.5 * k.ln() - std.ln(),
                }
            }
        }
    }

    fn at(&self, x: f64) -> f64 {
        match *self {
            Density::Normal { mu, inv_sigma, norm } => {
                let z = (x - mu) * inv_sigma;
                norm * (-0.5 * z * z).exp()
            }
            Density::Mixture { a, b, inv_phi } => {
                let za = (x - a.0) * inv_phi;
                let zb = (x - b.0) * inv_phi;
                a.1 * (-0.5 * za * za).exp() + b.1 * (-0.5 * zb * zb).exp()
            }
            // in terms of w = z/√k so large shapes do not cancel
            Density::Gamma { mean, inv_std, sqrt_k, k, log_c } => {
                let w = (x - mean) * inv_std / sqrt_k;
                if w <= -1.0 {
                    return 0.0;
                }
                let l = w.ln_1p();
                (log_c + k * (l - w) - l).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    pub fit_mse: f64,
    /// False when the sweep budget ran out before the step sizes collapsed;
    /// the parameters are then the best found so far.
    pub converged: bool,
}

/// Density of `shift + Γ(k, θ)` at `x`.
pub fn shifted_gamma_pdf(x: f64, k: f64, theta: f64, shift: f64) -> f64 {
    FitParams::Gamma { k, theta, shift }.pdf(x)
}

/// Mean squared difference between `h.density` and `params.pdf` at bin centers.
pub fn histogram_mse(h: &Histogram, params: &FitParams) -> f64 {
    let n = h.bins();
    let f = Density::new(params);
    (0..n)
        .map(|i| {
            let d = h.density[i] - f.at(h.center(i));
            d * d
        })
        .sum::<f64>()
        / n as f64
}

pub fn fit_histogram(h: &Histogram, family: FitFamily) -> Result<FitResult> {
    if h.degenerate || h.bins() < 2 {
        return Err(Error::invalid("cannot fit a degenerate histogram"));
    }
    let (mu, s, skew) = h.binned_moments();
    let s = s.max(f64::MIN_POSITIVE);
    let objective = |p: &FitParams| histogram_mse(h, p);

    let (params, converged) = match family {
        FitFamily::Gaussian => {
            let (z, ok) = fit_gaussian(&objective, mu, s);
            (gaussian_at(&z, mu, s), ok)
        }
        FitFamily::Mixture => {
            let build = |z: &[f64]| FitParams::Mixture {
                m1: mu + s * z[0],
                m2: mu + s * z[1],
                phi: s * z[2].exp(),
                p: 1.0 / (1.0 + (-z[3]).exp()),
            };
            let bounds = [(-10.0, 10.0), (-10.0, 10.0), (-10.0, 3.0), (-8.0, 8.0)];
            let starts = [
                vec![0.8, -0.8, 0.6f64.ln(), 0.0],
                vec![0.0, 0.0, 0.0, 0.0],
            ];
            best_of(
                starts.iter().map(|z0| {
                    minimize(|z| objective(&build(z)), z0.clone(), vec![0.5; 4], &bounds)
                }),
                |z| objective(&build(z)),
                build,
            )
        }
        FitFamily::Gamma => {
            // (mean, std, ln k) in histogram-scaled coordinates
            let build = |z: &[f64]| {
                let k = z[2].exp();
                let std = s * z[1].exp();
                let theta = std / k.sqrt();
                FitParams::Gamma {
                    k,
                    theta,
                    shift: mu + s * z[0] - k * theta,
                }
            };
            let bounds = [(-10.0, 10.0), (-10.0, 10.0), (MIN_SHAPE.ln(), MAX_SHAPE.ln())];
            let k_moment = if skew > 1e-3 {
                (4.0 / (skew * skew)).clamp(MIN_SHAPE, MAX_SHAPE)
            } else {
                1e6
            };
            let starts = [
                vec![0.0, 0.0, k_moment.ln()],
                vec![0.0, 0.0, 1e6f64.ln()],
                vec![0.0, 0.0, MAX_SHAPE.ln()],
            ];
            best_of(
                starts.iter().map(|z0| {
                    minimize(
                        |z| objective(&build(z)),
                        z0.clone(),
                        vec![0.5, 0.5, 1.0],
                        &bounds,
                    )
                }),
                |z| objective(&build(z)),
                build,
            )
        }
    };
    Ok(FitResult {
        params,
        fit_mse: histogram_mse(h, &params),
        converged,
    })
}

fn gaussian_at(z: &[f64], mu: f64, s: f64) -> FitParams {
    FitParams::Gaussian {
        mu: mu + s * z[0],
        sigma: s * z[1].exp(),
    }
}

/// Gaussian fit in `(mean, ln std)` coordinates scaled by the binned moments.
fn fit_gaussian(objective: &impl Fn(&FitParams) -> f64, mu: f64, s: f64) -> (Vec<f64>, bool) {
    minimize(
        |z| objective(&gaussian_at(z, mu, s)),
        vec![0.0, 0.0],
        vec![0.5, 0.5],
        &[(-10.0, 10.0), (-10.0, 10.0)],
    )
}

fn best_of(
    runs: impl Iterator<Item = (Vec<f64>, bool)>,
    f: impl Fn(&[f64]) -> f64,
    build: impl Fn(&[f64]) -> FitParams,
) -> (FitParams, bool) {
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for (z, ok) in runs {
        let v = f(&z);
        if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            best = Some((v, z, ok));
        }
    }
    let (_, z, ok) = best.expect("at least one start");
    (build(&z), ok)
}

/// Coordinate descent. Returns the best point and whether every step radius
/// shrank below tolerance within the sweep budget.
fn minimize(
    f: impl Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    mut radius: Vec<f64>,
    bounds: &[(f64, f64)],
) -> (Vec<f64>, bool) {
    let mut fx = f(&x);
    for _ in 0..MAX_SWEEPS {
        let before = fx;
        for i in 0..x.len() {
            let (lo, hi) = bounds[i];
            let a = (x[i] - radius[i]).max(lo);
            let b = (x[i] + radius[i]).min(hi);
            let eval = |v: f64, x: &mut Vec<f64>| {
                let old = x[i];
                x[i] = v;
                let r = f(x);
                x[i] = old;
                r
            };
            // coarse scan, then golden section around the best grid point
            let step = (b - a) / GRID as f64;
            let mut best = (x[i], fx);
            let mut best_j = None;
            for j in 0..=GRID {
                let v = a + step * j as f64;
                let fv = eval(v, &mut x);
                if fv < best.1 {
                    best = (v, fv);
                    best_j = Some(j);
                }
            }
            let center = best_j.map_or(x[i], |j| a + step * j as f64);
            let (mut lo_g, mut hi_g) = ((center - step).max(a), (center + step).min(b));
            let g = 0.618_033_988_749_894_9;
            let mut c = hi_g - g * (hi_g - lo_g);
            let mut d = lo_g + g * (hi_g - lo_g);
            let mut fc = eval(c, &mut x);
            let mut fd = eval(d, &mut x);
            for _ in 0..GOLDEN_ITERS {
                if fc < fd {
                    hi_g = d;
                    d = c;
                    fd = fc;
                    c = hi_g - g * (hi_g - lo_g);
                    fc = eval(c, &mut x);
                } else {
                    lo_g = c;
                    c = d;
                    fc = fd;
                    d = lo_g + g * (hi_g - lo_g);
                    fd = eval(d, &mut x);
                }
            }
            for (v, fv) in [(c, fc), (d, fd)] {
                if fv < best.1 {
                    best = (v, fv);
                }
            }
            if best.1 < fx {
                let moved = (best.0 - x[i]).abs();
                x[i] = best.0;
                fx = best.1;
                // grow when the optimum sits near the edge of the search window
                radius[i] = if moved > 0.75 * radius[i] {
                    radius[i] * 2.0
                } else {
                    (2.0 * moved).max(radius[i] * 0.5)
                };
            } else {
                radius[i] *= 0.5;
            }
        }
        let stalled = (before - fx) <= 1e-12 * before.abs();
        if radius.iter().all(|r| *r < 1e-6) || (stalled && radius.iter().all(|r| *r < 1e-3)) {
            return (x, true);
        }
    }
    (x, false)
}
