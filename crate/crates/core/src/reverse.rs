//! Reverse-process samplers.
//!
//! DDPM ancestral steps follow the per-family inference procedures: the mean
//! update divides by `√α_t` and the added noise `σ_t z` uses the family's
//! accumulated noise at `t - 1`, normalized to unit variance. DDIM steps go
//! through an `x_0` prediction and swap the Gaussian `z` for the same
//! family-specific unit noise.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseProcess;
use crate::schedule::NoiseSchedule;
use crate::tensor::Tensor;

/// Anything that predicts the normalized noise target from `(x_t, t)`.
pub trait EpsModel {
    /// Shape of one sample, without the batch axis.
    fn data_shape(&self) -> Vec<usize>;

    /// Predictions for a batch `[n, ...data_shape]` sharing timestep `t`.
    fn predict(&self, x_t: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            other => Err(Error::invalid(format!("unknown sampler '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// DDIM stochasticity; 0 is deterministic. Ignored by DDPM.
    pub eta: f64,
    /// Strictly increasing timesteps in `[1, T]`, visited in reverse.
    pub steps: Vec<usize>,
    /// Clip the DDIM `x_0` prediction to `[-1, 1]`.
    pub clip_x0: bool,
    /// Keep a snapshot whenever the chain lands on a multiple of this; 0 keeps
    /// only the start and the end.
    pub record_every: usize,
}

impl SamplerConfig {
    /// Every timestep `1..=T`.
    pub fn full(kind: SamplerKind, len: usize) -> Self {
        Self {
            kind,
            eta: 0.0,
            steps: (1..=len).collect(),
            clip_x0: false,
            record_every: 0,
        }
    }

    pub fn with_steps(kind: SamplerKind, len: usize, n: usize, eta: f64) -> Result<Self> {
        Ok(Self {
            kind,
            eta,
            steps: timestep_subsequence(len, n)?,
            clip_x0: false,
            record_every: 0,
        })
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::invalid("sampler needs at least one timestep"));
        }
        if self.steps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sampler timesteps must be strictly increasing"));
        }
        if self.steps[0] == 0 || *self.steps.last().unwrap() > len {
            return Err(Error::invalid(format!("sampler timesteps must lie in [1, {len}]")));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be non-negative, got {}", self.eta)));
        }
        Ok(())
    }
}

/// `n` evenly spaced timesteps from 1 to `T`: `t_i = 1 + round(i (T-1)/(n-1))`.
/// A single step is `[T]`.
pub fn timestep_subsequence(len: usize, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > len {
        return Err(Error::invalid(format!("cannot pick {n} timesteps out of {len}")));
    }
    if n == 1 {
        return Ok(vec![len]);
    }
    Ok((0..n)
        .map(|i| 1 + ((i * (len - 1)) as f64 / (n - 1) as f64).round() as usize)
        .collect())
}

/// One ancestral step from `t` to `t - 1`.
pub fn ddpm_step<R: Rng + ?Sized>(
    x_t: &Tensor,
    t: usize,
    eps_hat: &Tensor,
    process: &NoiseProcess,
    rng: &mut R,
) -> Result<Tensor> {
    process.schedule().check_t(t)?;
    ddpm_step_to(x_t, t, t - 1, eps_hat, process, rng)
}

/// Ancestral step from `t` to any earlier `t_prev`, treating the skipped
/// steps as one with `α = ᾱ_t / ᾱ_{t_prev}`. For `t_prev = t - 1` this is
/// exactly [`ddpm_step`].
pub fn ddpm_step_to<R: Rng + ?Sized>(
    x_t: &Tensor,
    t: usize,
    t_prev: usize,
    eps_hat: &Tensor,
    process: &NoiseProcess,
    rng: &mut R,
) -> Result<Tensor> {
    let s = process.schedule();
    s.check_t(t)?;
    if t_prev >= t {
        return Err(Error::invalid(format!("t_prev = {t_prev} must be below t = {t}")));
    }
    eps_hat.ensure_shape(x_t.shape())?;
    let (alpha, beta, sigma) = if t_prev + 1 == t {
        (s.alpha(t), s.beta(t), s.sigma(t))
    } else {
        let a = s.alpha_bar(t) / s.alpha_bar(t_prev);
        (a, 1.0 - a, (1.0 - a).sqrt())
    };
    let coeff = beta / s.one_minus_alpha_bar(t).sqrt();
    let inv_sqrt_alpha = 1.0 / alpha.sqrt();
    let mut out: Vec<f64> = x_t
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(x, e)| (x - coeff * e) * inv_sqrt_alpha)
        .collect();
    if t_prev >= 1 {
        let mut z = vec![0.0; out.len()];
        process.fill_unit_noise(t_prev, &mut z, rng);
        out.iter_mut().zip(&z).for_each(|(v, z)| *v += sigma * z);
    }
    Ok(Tensor::from_parts(out, x_t.shape().to_vec()))
}

/// DDIM step from `t` to `t_prev` (`t_prev = 0` returns the `x_0` prediction).
#[allow(clippy::too_many_arguments)]
pub fn ddim_step<R: Rng + ?Sized>(
    x_t: &Tensor,
    t: usize,
    t_prev: usize,
    eps_hat: &Tensor,
    process: &NoiseProcess,
    eta: f64,
    clip_x0: bool,
    rng: &mut R,
) -> Result<Tensor> {
    let s = process.schedule();
    s.check_t(t)?;
    if t_prev >= t {
        return Err(Error::invalid(format!("t_prev = {t_prev} must be below t = {t}")));
    }
    if eta.is_nan() || eta < 0.0 {
        return Err(Error::invalid(format!("eta must be non-negative, got {eta}")));
    }
    eps_hat.ensure_shape(x_t.shape())?;
    let (ab, ab_prev) = (s.alpha_bar(t), s.alpha_bar(t_prev));
    let (om, om_prev) = (s.one_minus_alpha_bar(t), s.one_minus_alpha_bar(t_prev));
    let sigma = eta * (om_prev / om).sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt();
    let dir_var = om_prev - sigma * sigma;
    if dir_var < 0.0 {
        return Err(Error::invalid(format!(
            "DDIM noise variance {} exceeds 1 - alpha_bar_prev = {om_prev}",
            sigma * sigma
        )));
    }
    let (sqrt_ab, sqrt_om) = (ab.sqrt(), om.sqrt());
    let (sqrt_ab_prev, dir) = (ab_prev.sqrt(), dir_var.sqrt());
    let mut out: Vec<f64> = x_t
        .data()
        .iter()
        .zip(eps_hat.data())
        .map(|(x, e)| {
            let mut x0 = (x - sqrt_om * e) / sqrt_ab;
            if clip_x0 {
                x0 = x0.clamp(-1.0, 1.0);
            }
            sqrt_ab_prev * x0 + dir * e
        })
        .collect();
    if t_prev >= 1 && sigma > 0.0 {
        let mut z = vec![0.0; out.len()];
        process.fill_unit_noise(t_prev, &mut z, rng);
        out.iter_mut().zip(&z).for_each(|(v, z)| *v += sigma * z);
    }
    Ok(Tensor::from_parts(out, x_t.shape().to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(t, x_t)` in decreasing `t`, starting with the initial noise.
    pub snapshots: Vec<(usize, Tensor)>,
    pub x0: Tensor,
}

impl Trajectory {
    /// One JSON object per snapshot: `{"t":..,"shape":[..],"data":[..]}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (t, x) in &self.snapshots {
            let line = serde_json::json!({ "t": t, "shape": x.shape(), "data": x.data() });
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

/// Draws `n` samples by running the configured sampler from `x_T`.
pub fn sample<M: EpsModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    process: &NoiseProcess,
    cfg: &SamplerConfig,
    n: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let s = process.schedule();
    cfg.validate(s.len())?;
    if n == 0 {
        return Err(Error::invalid("cannot draw zero samples"));
    }
    let mut shape = vec![n];
    shape.extend(model.data_shape());
    let start = *cfg.steps.last().unwrap();
    let mut x = process.unit_noise(start, &shape, rng)?;
    let mut snapshots = vec![(start, x.clone())];
    for i in (0..cfg.steps.len()).rev() {
        let t = cfg.steps[i];
        let t_prev = if i == 0 { 0 } else { cfg.steps[i - 1] };
        let eps = model.predict(&x, t, s)?;
        eps.ensure_shape(x.shape())?;
        x = match cfg.kind {
            SamplerKind::Ddpm => ddpm_step_to(&x, t, t_prev, &eps, process, rng)?,
            SamplerKind::Ddim => ddim_step(&x, t, t_prev, &eps, process, cfg.eta, cfg.clip_x0, rng)?,
        };
        if t_prev > 0 && cfg.record_every > 0 && t_prev % cfg.record_every == 0 {
            snapshots.push((t_prev, x.clone()));
        }
    }
    snapshots.push((0, x.clone()));
    Ok(Trajectory { snapshots, x0: x })
}

/// The exact noise predictor for a dataset holding a single point `x0`:
/// `ε*(x_t, t) = (x_t - √ᾱ_t x0) / √(1 - ᾱ_t)`.
#[derive(Debug, Clone)]
pub struct PointMassOracle {
    pub x0: Tensor,
}

impl EpsModel for PointMassOracle {
    fn data_shape(&self) -> Vec<usize> {
        self.x0.shape().to_vec()
    }

    fn predict(&self, x_t: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor> {
        let w = self.x0.len();
        if x_t.row_len() != w {
            return Err(Error::Shape {
                expected: self.x0.shape().to_vec(),
                got: x_t.shape().to_vec(),
            });
        }
        let m = schedule.alpha_bar(t).sqrt();
        let sd = schedule.one_minus_alpha_bar(t).sqrt();
        let data = x_t
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| (x - m * self.x0.data()[i % w]) / sd)
            .collect();
        Ok(Tensor::from_parts(data, x_t.shape().to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::closed_form_sample;
    use crate::noise::{FamilySpec, PhiMode, PhiSchedule};
    use crate::rng::{domain, stream};
    use crate::schedule::{linear_schedule, NoiseSchedule};
    use crate::stats::Moments;
    use proptest::prelude::*;

    fn families() -> Vec<FamilySpec> {
        vec![
            FamilySpec::Gaussian,
            FamilySpec::Mixture {
                p: 0.5,
                phi_schedule: PhiSchedule {
                    mode: PhiMode::ByTimestep,
                    start: 1.0,
                    end: 0.5,
                },
            },
            FamilySpec::Gamma { theta0: 0.001 },
        ]
    }

    #[test]
    fn subsequence_formula() {
        assert_eq!(timestep_subsequence(10, 10).unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(timestep_subsequence(1000, 1).unwrap(), vec![1000]);
        let s = timestep_subsequence(1000, 10).unwrap();
        assert_eq!(s, vec![1, 112, 223, 334, 445, 556, 667, 778, 889, 1000]);
        assert!(timestep_subsequence(10, 11).is_err());
        assert!(timestep_subsequence(10, 0).is_err());
    }

    #[test]
    fn single_step_oracle_recovers_x0() {
        let s = NoiseSchedule::from_betas(vec![0.3]).unwrap();
        let x0 = Tensor::new(vec![0.7, -1.2, 0.05], vec![3]).unwrap();
        for spec in families() {
            let p = NoiseProcess::new(spec, s.clone()).unwrap();
            let mut rng = stream(1, domain::VERIFY, 0);
            let pair = closed_form_sample(&x0, 1, &p, &mut rng).unwrap();
            let out = ddpm_step(&pair.x_t, 1, &pair.target, &p, &mut rng).unwrap();
            assert!(out.max_abs_diff(&x0) < 1e-12);
        }
    }

    #[test]
    fn zero_mean_path_leaves_sigma_noise() {
        let s = linear_schedule(100, 1e-3, 0.05).unwrap();
        let t = 40;
        let n = 1_000_000;
        for spec in families() {
            let p = NoiseProcess::new(spec.clone(), s.clone()).unwrap();
            let zero = Tensor::zeros(vec![n]);
            let out = ddpm_step(&zero, t, &zero, &p, &mut stream(2, domain::VERIFY, 0)).unwrap();
            let m = Moments::of(out.data());
            assert!((m.var / s.beta(t) - 1.0).abs() < 0.01, "{spec:?} {m:?}");
        }
    }

    #[test]
    fn gamma_reverse_noise_is_unit_variance() {
        let s = linear_schedule(1000, 1e-4, 0.02).unwrap();
        let p = NoiseProcess::new(FamilySpec::Gamma { theta0: 0.01 }, s).unwrap();
        let z = p.unit_noise(99, &[1_000_000], &mut stream(3, domain::VERIFY, 0)).unwrap();
        let m = Moments::of(z.data());
        assert!(m.mean.abs() < 4.0 * m.se_mean);
        assert!((m.var - 1.0).abs() < 0.01);
    }

    #[test]
    fn ddim_eta_zero_is_deterministic() {
        let s = linear_schedule(50, 1e-3, 0.1).unwrap();
        let p = NoiseProcess::new(FamilySpec::Gamma { theta0: 0.05 }, s).unwrap();
        let x = Tensor::new(vec![0.3, -0.8], vec![2]).unwrap();
        let e = Tensor::new(vec![0.1, 0.2], vec![2]).unwrap();
        let a = ddim_step(&x, 30, 20, &e, &p, 0.0, false, &mut stream(4, 0, 0)).unwrap();
        let b = ddim_step(&x, 30, 20, &e, &p, 0.0, false, &mut stream(5, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ddim_oracle_predicts_x0_at_every_step() {
        let s = linear_schedule(200, 1e-4, 0.05).unwrap();
        let x0 = Tensor::new(vec![0.9, -0.3], vec![2]).unwrap();
        let oracle = PointMassOracle { x0: x0.clone() };
        for spec in families() {
            let p = NoiseProcess::new(spec, s.clone()).unwrap();
            let mut rng = stream(6, domain::SAMPLE, 0);
            let mut x = p.unit_noise(200, &[1, 2], &mut rng).unwrap();
            let steps = timestep_subsequence(200, 20).unwrap();
            for i in (0..steps.len()).rev() {
                let t = steps[i];
                let eps = oracle.predict(&x, t, &s).unwrap();
                let pred: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(eps.data())
                    .map(|(x, e)| (x - s.one_minus_alpha_bar(t).sqrt() * e) / s.alpha_bar(t).sqrt())
                    .collect();
                assert!(pred.iter().zip(x0.data()).all(|(a, b)| (a - b).abs() < 1e-9));
                let prev = if i == 0 { 0 } else { steps[i - 1] };
                x = ddim_step(&x, t, prev, &eps, &p, 0.0, false, &mut rng).unwrap();
            }
        }
    }

    #[test]
    fn ddim_eta_one_reduces_to_posterior_variance() {
        // 3-step schedule; with eps_hat = 0 the only randomness is σ z
        let s = NoiseSchedule::from_betas(vec![0.1, 0.2, 0.3]).unwrap();
        let p = NoiseProcess::new(FamilySpec::Gaussian, s.clone()).unwrap();
        let n = 1_000_000;
        let x = Tensor::filled(vec![n], 0.5);
        let e = Tensor::zeros(vec![n]);
        for t in [2, 3] {
            let out = ddim_step(&x, t, t - 1, &e, &p, 1.0, false, &mut stream(7, 0, t as u64)).unwrap();
            let m = Moments::of(out.data());
            let beta_tilde = s.one_minus_alpha_bar(t - 1) / s.one_minus_alpha_bar(t) * s.beta(t);
            assert!((m.var / beta_tilde - 1.0).abs() < 0.02, "t={t} {m:?} {beta_tilde}");
        }
    }

    #[test]
    fn ddim_rejects_excess_noise() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.2, 0.3]).unwrap();
        let p = NoiseProcess::new(FamilySpec::Gaussian, s).unwrap();
        let x = Tensor::zeros(vec![1]);
        assert!(ddim_step(&x, 3, 2, &x, &p, 5.0, false, &mut stream(0, 0, 0)).is_err());
        assert!(ddpm_step(&x, 0, &x, &p, &mut stream(0, 0, 0)).is_err());
        assert!(ddpm_step(&x, 4, &x, &p, &mut stream(0, 0, 0)).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_gamma_init_has_unit_variance() {
        let s = linear_schedule(100, 1e-3, 0.2).unwrap();
        let oracle = PointMassOracle {
            x0: Tensor::new(vec![0.5, 0.5], vec![2]).unwrap(),
        };
        for spec in families() {
            let p = NoiseProcess::new(spec.clone(), s.clone()).unwrap();
            let cfg = SamplerConfig::with_steps(SamplerKind::Ddim, 100, 10, 0.0).unwrap();
            let a = sample(&oracle, &p, &cfg, 4, &mut stream(8, domain::SAMPLE, 0)).unwrap();
            let b = sample(&oracle, &p, &cfg, 4, &mut stream(8, domain::SAMPLE, 0)).unwrap();
            assert_eq!(a, b);
            let init = p.unit_noise(100, &[1_000_000], &mut stream(9, 0, 0)).unwrap();
            let m = Moments::of(init.data());
            assert!(m.mean.abs() < 4.0 * m.se_mean, "{spec:?}");
            assert!((m.var - 1.0).abs() < 0.01, "{spec:?}");
        }
    }

    #[test]
    fn ddpm_oracle_sampler_lands_near_point() {
        let s = linear_schedule(100, 1e-3, 0.2).unwrap();
        let x0 = Tensor::new(vec![0.4, -0.6], vec![2]).unwrap();
        let oracle = PointMassOracle { x0: x0.clone() };
        for spec in families() {
            let p = NoiseProcess::new(spec, s.clone()).unwrap();
            let cfg = SamplerConfig::full(SamplerKind::Ddpm, 100);
            let traj = sample(&oracle, &p, &cfg, 2000, &mut stream(10, domain::SAMPLE, 0)).unwrap();
            // the last added noise is σ_2 z; the spread of x_0 is of that order
            let spread = 4.0 * s.sigma(2);
            for i in 0..traj.x0.rows() {
                for (a, b) in traj.x0.row(i).iter().zip(x0.data()) {
                    assert!((a - b).abs() < 5.0 * spread, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn trajectory_records_checkpoints() {
        let s = linear_schedule(20, 1e-3, 0.2).unwrap();
        let p = NoiseProcess::new(FamilySpec::Gaussian, s).unwrap();
        let oracle = PointMassOracle {
            x0: Tensor::new(vec![0.0], vec![1]).unwrap(),
        };
        let mut cfg = SamplerConfig::full(SamplerKind::Ddpm, 20);
        cfg.record_every = 5;
        let traj = sample(&oracle, &p, &cfg, 3, &mut stream(11, 0, 0)).unwrap();
        let ts: Vec<usize> = traj.snapshots.iter().map(|(t, _)| *t).collect();
        assert_eq!(ts, vec![20, 15, 10, 5, 0]);
        assert_eq!(traj.to_jsonl().lines().count(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn steps_stay_finite(
            x in prop::collection::vec(-1e3f64..1e3, 2),
            e in prop::collection::vec(-1e3f64..1e3, 2),
            t in 1usize..=1000,
            ddim in any::<bool>(),
            fam in 0usize..3,
        ) {
            thread_local! {
                static PROCS: Vec<NoiseProcess> = {
                    let s = linear_schedule(1000, 1e-4, 0.02).unwrap();
                    families().into_iter().map(|f| NoiseProcess::new(f, s.clone()).unwrap()).collect()
                };
            }
            let x = Tensor::new(x, vec![2]).unwrap();
            let e = Tensor::new(e, vec![2]).unwrap();
            let out = PROCS.with(|p| {
                let p = &p[fam];
                let mut rng = stream(t as u64, 0, 0);
                if ddim {
                    ddim_step(&x, t, t / 2, &e, p, 1.0, false, &mut rng)
                } else {
                    ddpm_step(&x, t, &e, p, &mut rng)
                }
            }).unwrap();
            prop_assert!(out.is_finite());
        }
    }
}
