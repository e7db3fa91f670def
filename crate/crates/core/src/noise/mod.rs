//! The three noise families and their per-step and accumulated samplers.
//!
//! A [`NoiseProcess`] binds a [`FamilySpec`] to a [`NoiseSchedule`] and
//! precomputes everything that depends on both (Gamma shapes and scales,
//! per-step mixture parameters).
//!
//! Every family obeys the same variance budget: the one-step additive noise
//! has mean 0 and variance `β_t`, the accumulated noise of the closed-form
//! jump has mean 0 and variance `1 - ᾱ_t`.

mod gamma;
mod mixture;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use gamma::gamma_variate;
pub use mixture::{mixture_params, MixtureParams};

use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// How the mixture component std `φ_t` moves along the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// `φ_t = φ_start + (φ_end - φ_start) · t / T`
    ByTimestep,
    /// `φ_t = φ_start + (φ_end - φ_start) · √ᾱ_t`
    ByNoiseLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSchedule {
    pub mode: PhiMode,
    pub start: f64,
    pub end: f64,
}

fn default_p() -> f64 {
    0.5
}

/// Serialized noise family, e.g. `{"family":"gamma","theta0":0.001}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", from = "StrictFamily")]
pub enum FamilySpec {
    Gaussian,
    Mixture {
        #[serde(default = "default_p")]
        p: f64,
        phi_schedule: PhiSchedule,
    },
    Gamma {
        theta0: f64,
    },
}

// Unit variants of internally tagged enums ignore unknown fields, so
// deserialization goes through a mirror with an empty struct variant.
#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum StrictFamily {
    Gaussian {},
    Mixture {
        #[serde(default = "default_p")]
        p: f64,
        phi_schedule: PhiSchedule,
    },
    Gamma {
        theta0: f64,
    },
}

impl From<StrictFamily> for FamilySpec {
    fn from(f: StrictFamily) -> Self {
        match f {
            StrictFamily::Gaussian {} => FamilySpec::Gaussian,
            StrictFamily::Mixture { p, phi_schedule } => FamilySpec::Mixture { p, phi_schedule },
            StrictFamily::Gamma { theta0 } => FamilySpec::Gamma { theta0 },
        }
    }
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Gaussian => "gaussian",
            FamilySpec::Mixture { .. } => "mixture",
            FamilySpec::Gamma { .. } => "gamma",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FamilySpec::Gaussian => Ok(()),
            FamilySpec::Mixture { p, phi_schedule } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::invalid(format!("mixture p must lie in (0, 1), got {p}")));
                }
                for (name, v) in [("start", phi_schedule.start), ("end", phi_schedule.end)] {
                    if !(v > 0.0 && v <= 1.0) {
                        return Err(Error::invalid(format!(
                            "phi_schedule.{name} must lie in (0, 1], got {v}"
                        )));
                    }
                }
                Ok(())
            }
            FamilySpec::Gamma { theta0 } => {
                if !(*theta0 > 0.0 && theta0.is_finite()) {
                    return Err(Error::invalid(format!("theta0 must be positive, got {theta0}")));
                }
                Ok(())
            }
        }
    }
}

/// Gamma-noise parameters derived from a schedule and an initial scale `θ_0`.
///
/// `θ_t = √ᾱ_t θ_0`, `k_t = β_t / (ᾱ_t θ_0²)`, `k̄_t = Σ_{i≤t} k_i`, so that
/// `k_t θ_t² = β_t` and `k̄_t θ_t² = 1 - ᾱ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaParams {
    pub theta0: f64,
    theta: Vec<f64>,
    k: Vec<f64>,
    k_bar: Vec<f64>,
}

pub fn gamma_params(s: &NoiseSchedule, theta0: f64) -> Result<GammaParams> {
    if !(theta0 > 0.0 && theta0.is_finite()) {
        return Err(Error::invalid(format!("theta0 must be positive, got {theta0}")));
    }
    let t0_sq = theta0 * theta0;
    let mut theta = Vec::with_capacity(s.len());
    let mut k = Vec::with_capacity(s.len());
    let mut k_bar = Vec::with_capacity(s.len());
    let mut acc = 0.0;
    for t in 1..=s.len() {
        let ab = s.alpha_bar(t);
        let kt = s.beta(t) / (ab * t0_sq);
        acc += kt;
        theta.push(ab.sqrt() * theta0);
        k.push(kt);
        k_bar.push(acc);
    }
    Ok(GammaParams {
        theta0,
        theta,
        k,
        k_bar,
    })
}

impl GammaParams {
    pub fn theta(&self, t: usize) -> f64 {
        self.theta[t - 1]
    }

    pub fn k(&self, t: usize) -> f64 {
        self.k[t - 1]
    }

    pub fn k_bar(&self, t: usize) -> f64 {
        self.k_bar[t - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kernel {
    Gaussian,
    /// Mixture parameters for `t = 1..=T`, index `t - 1`.
    Mixture(Vec<MixtureParams>),
    Gamma(GammaParams),
}

/// A noise family bound to a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProcess {
    spec: FamilySpec,
    schedule: NoiseSchedule,
    kernel: Kernel,
}

pub fn phi_at(phi: &PhiSchedule, s: &NoiseSchedule, t: usize) -> Result<f64> {
    s.check_t(t)?;
    let frac = match phi.mode {
        PhiMode::ByTimestep => t as f64 / s.len() as f64,
        PhiMode::ByNoiseLevel => s.alpha_bar(t).sqrt(),
    };
    let v = phi.start + (phi.end - phi.start) * frac;
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::invalid(format!("phi_{t} = {v} outside (0, 1]")));
    }
    Ok(v)
}

impl NoiseProcess {
    pub fn new(spec: FamilySpec, schedule: NoiseSchedule) -> Result<Self> {
        spec.validate()?;
        let kernel = match &spec {
            FamilySpec::Gaussian => Kernel::Gaussian,
            FamilySpec::Mixture { p, phi_schedule } => Kernel::Mixture(
                (1..=schedule.len())
                    .map(|t| mixture_params(*p, phi_at(phi_schedule, &schedule, t)?))
                    .collect::<Result<_>>()?,
            ),
            FamilySpec::Gamma { theta0 } => Kernel::Gamma(gamma_params(&schedule, *theta0)?),
        };
        Ok(Self {
            spec,
            schedule,
            kernel,
        })
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn gamma(&self) -> Option<&GammaParams> {
        match &self.kernel {
            Kernel::Gamma(g) => Some(g),
            _ => None,
        }
    }

    pub fn mixture(&self, t: usize) -> Option<&MixtureParams> {
        match &self.kernel {
            Kernel::Mixture(m) => Some(&m[t - 1]),
            _ => None,
        }
    }

    /// `φ_t` for mixture processes.
    pub fn phi_at(&self, t: usize) -> Result<f64> {
        self.schedule.check_t(t)?;
        self.mixture(t)
            .map(|m| m.phi)
            .ok_or_else(|| Error::invalid("phi_t is only defined for the mixture family"))
    }

    /// Fills `out` with the additive term of the one-step recurrence
    /// `x_t = √α_t x_{t-1} + noise`, one independent draw per element.
    pub fn fill_step_noise<R: Rng + ?Sized>(&self, t: usize, out: &mut [f64], rng: &mut R) {
        let sb = self.schedule.beta(t).sqrt();
        match &self.kernel {
            Kernel::Gaussian => out
                .iter_mut()
                .for_each(|v| *v = sb * rng.sample::<f64, _>(StandardNormal)),
            Kernel::Mixture(m) => {
                let m = &m[t - 1];
                out.iter_mut().for_each(|v| *v = sb * m.sample(rng));
            }
            Kernel::Gamma(g) => {
                let (k, th) = (g.k(t), g.theta(t));
                out.iter_mut().for_each(|v| *v = gamma::centered(k, th, rng));
            }
        }
    }

    pub fn step_noise<R: Rng + ?Sized>(
        &self,
        t: usize,
        shape: &[usize],
        rng: &mut R,
    ) -> Result<Tensor> {
        self.schedule.check_t(t)?;
        let mut data = vec![0.0; shape.iter().product()];
        self.fill_step_noise(t, &mut data, rng);
        Ok(Tensor::from_parts(data, shape.to_vec()))
    }

    /// Fills `scaled` with the total noise of the closed-form jump to `t` and
    /// `raw` with the family's unscaled variable (`ε`, `N_t` or `ḡ_t - k̄_t θ_t`).
    pub fn fill_accumulated<R: Rng + ?Sized>(
        &self,
        t: usize,
        scaled: &mut [f64],
        raw: &mut [f64],
        rng: &mut R,
    ) {
        let s = self.schedule.one_minus_alpha_bar(t).sqrt();
        match &self.kernel {
            Kernel::Gaussian => {
                for (a, r) in scaled.iter_mut().zip(raw.iter_mut()) {
                    *r = rng.sample(StandardNormal);
                    *a = s * *r;
                }
            }
            Kernel::Mixture(m) => {
                let m = &m[t - 1];
                for (a, r) in scaled.iter_mut().zip(raw.iter_mut()) {
                    *r = m.sample(rng);
                    *a = s * *r;
                }
            }
            Kernel::Gamma(g) => {
                let (k, th) = (g.k_bar(t), g.theta(t));
                for (a, r) in scaled.iter_mut().zip(raw.iter_mut()) {
                    *r = gamma::centered(k, th, rng);
                    *a = *r;
                }
            }
        }
    }

    pub fn accumulated_noise<R: Rng + ?Sized>(
        &self,
        t: usize,
        shape: &[usize],
        rng: &mut R,
    ) -> Result<Tensor> {
        self.schedule.check_t(t)?;
        let n = shape.iter().product();
        let mut scaled = vec![0.0; n];
        let mut raw = vec![0.0; n];
        self.fill_accumulated(t, &mut scaled, &mut raw, rng);
        Ok(Tensor::from_parts(scaled, shape.to_vec()))
    }

    /// Scale that turns the raw accumulated variable into the unit-variance
    /// regression target: 1 for Gaussian and mixture, `1/√(1-ᾱ_t)` for Gamma.
    pub fn target_scale(&self, t: usize) -> f64 {
        match self.kernel {
            Kernel::Gamma(_) => 1.0 / self.schedule.one_minus_alpha_bar(t).sqrt(),
            _ => 1.0,
        }
    }

    pub fn normalized_eps_target(&self, t: usize, raw_noise: &Tensor) -> Result<Tensor> {
        self.schedule.check_t(t)?;
        let c = self.target_scale(t);
        let data = raw_noise.data().iter().map(|v| v * c).collect();
        Ok(Tensor::from_parts(data, raw_noise.shape().to_vec()))
    }

    /// Fills `out` with the family's accumulated noise at `t` normalized to
    /// unit variance. Used for `x_T` and for the reverse-step noise `z`.
    pub fn fill_unit_noise<R: Rng + ?Sized>(&self, t: usize, out: &mut [f64], rng: &mut R) {
        match &self.kernel {
            Kernel::Gaussian => out
                .iter_mut()
                .for_each(|v| *v = rng.sample(StandardNormal)),
            Kernel::Mixture(m) => {
                let m = &m[t - 1];
                out.iter_mut().for_each(|v| *v = m.sample(rng));
            }
            Kernel::Gamma(g) => {
                let (k, th) = (g.k_bar(t), g.theta(t));
                let c = self.target_scale(t);
                out.iter_mut()
                    .for_each(|v| *v = c * gamma::centered(k, th, rng));
            }
        }
    }

    pub fn unit_noise<R: Rng + ?Sized>(
        &self,
        t: usize,
        shape: &[usize],
        rng: &mut R,
    ) -> Result<Tensor> {
        self.schedule.check_t(t)?;
        let mut data = vec![0.0; shape.iter().product()];
        self.fill_unit_noise(t, &mut data, rng);
        Ok(Tensor::from_parts(data, shape.to_vec()))
    }
}
