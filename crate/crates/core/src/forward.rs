//! The forward (noising) process.
//!
//! Training pairs always come from the single closed-form jump
//! `x_t = √ᾱ_t x_0 + noise`. The step-by-step chain is kept for checking
//! that the jump and the chain agree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseProcess;
use crate::stats::Histogram;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub x_t: Tensor,
    pub t: usize,
    /// `√ᾱ_t`, for noise-level conditioning.
    pub noise_level: f64,
    /// Unit-variance regression target for the predictor.
    pub target: Tensor,
}

pub fn closed_form_sample<R: Rng + ?Sized>(
    x0: &Tensor,
    t: usize,
    process: &NoiseProcess,
    rng: &mut R,
) -> Result<TrainingPair> {
    let s = process.schedule();
    s.check_t(t)?;
    let n = x0.len();
    let mut noise = vec![0.0; n];
    let mut raw = vec![0.0; n];
    process.fill_accumulated(t, &mut noise, &mut raw, rng);
    let mean_coeff = s.alpha_bar(t).sqrt();
    let x_t = x0
        .data()
        .iter()
        .zip(&noise)
        .map(|(x, e)| mean_coeff * x + e)
        .collect();
    let c = process.target_scale(t);
    raw.iter_mut().for_each(|v| *v *= c);
    Ok(TrainingPair {
        x_t: Tensor::from_parts(x_t, x0.shape().to_vec()),
        t,
        noise_level: mean_coeff,
        target: Tensor::from_parts(raw, x0.shape().to_vec()),
    })
}

/// Closed-form jumps for a batch `[B, ...]` with one timestep per row.
/// Returns `(x_t, target)` with the batch's shape.
pub fn closed_form_batch<R: Rng + ?Sized>(
    x0: &Tensor,
    ts: &[usize],
    process: &NoiseProcess,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    if ts.len() != x0.rows() {
        return Err(Error::invalid(format!(
            "{} timesteps for a batch of {}",
            ts.len(),
            x0.rows()
        )));
    }
    let s = process.schedule();
    let w = x0.row_len();
    let mut x_t = vec![0.0; x0.len()];
    let mut target = vec![0.0; x0.len()];
    for (i, &t) in ts.iter().enumerate() {
        s.check_t(t)?;
        let range = i * w..(i + 1) * w;
        process.fill_accumulated(t, &mut x_t[range.clone()], &mut target[range.clone()], rng);
        let mean_coeff = s.alpha_bar(t).sqrt();
        let c = process.target_scale(t);
        for j in range {
            x_t[j] += mean_coeff * x0.data()[j];
            target[j] *= c;
        }
    }
    Ok((
        Tensor::from_parts(x_t, x0.shape().to_vec()),
        Tensor::from_parts(target, x0.shape().to_vec()),
    ))
}

/// Runs the one-step recurrence `x_i = √α_i x_{i-1} + step_noise(i)` for `i = 1..=t`.
pub fn iterate_chain<R: Rng + ?Sized>(
    x0: &Tensor,
    t: usize,
    process: &NoiseProcess,
    rng: &mut R,
) -> Result<Tensor> {
    let s = process.schedule();
    s.check_t(t)?;
    let mut x = x0.data().to_vec();
    let mut noise = vec![0.0; x.len()];
    for i in 1..=t {
        process.fill_step_noise(i, &mut noise, rng);
        let a = s.alpha(i).sqrt();
        x.iter_mut().zip(&noise).for_each(|(v, e)| *v = a * *v + e);
    }
    Ok(Tensor::from_parts(x, x0.shape().to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// One closed-form jump per draw.
    #[default]
    ClosedForm,
    /// `t` explicit recurrence steps per draw.
    Iterated,
}

/// Pooled elements of `x_t - √ᾱ_t x_0` over `n_draws` independent draws.
pub fn residuals<R: Rng + ?Sized>(
    x0: &Tensor,
    t: usize,
    process: &NoiseProcess,
    rng: &mut R,
    n_draws: usize,
    mode: ResidualMode,
) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::invalid("residual is undefined before the first step (t = 0)"));
    }
    process.schedule().check_t(t)?;
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be at least 1"));
    }
    let mean_coeff = process.schedule().alpha_bar(t).sqrt();
    let mut out = Vec::with_capacity(n_draws * x0.len());
    for _ in 0..n_draws {
        let x_t = match mode {
            ResidualMode::ClosedForm => closed_form_sample(x0, t, process, rng)?.x_t,
            ResidualMode::Iterated => iterate_chain(x0, t, process, rng)?,
        };
        out.extend(x_t.data().iter().zip(x0.data()).map(|(x, x0)| x - mean_coeff * x0));
    }
    Ok(out)
}

/// Histogram of [`residuals`], equal-width bins over the observed range.
#[allow(clippy::too_many_arguments)]
pub fn residual_histogram<R: Rng + ?Sized>(
    x0: &Tensor,
    t: usize,
    process: &NoiseProcess,
    rng: &mut R,
    n_draws: usize,
    bins: usize,
    mode: ResidualMode,
) -> Result<Histogram> {
    if bins < 10 {
        return Err(Error::invalid(format!("residual histogram needs >= 10 bins, got {bins}")));
    }
    Histogram::from_samples(&residuals(x0, t, process, rng, n_draws, mode)?, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{FamilySpec, PhiMode, PhiSchedule};
    use crate::rng::{domain, stream};
    use crate::schedule::linear_schedule;
    use crate::stats::{ks_critical_value, ks_two_sample, Moments};

    fn process(spec: FamilySpec) -> NoiseProcess {
        NoiseProcess::new(spec, linear_schedule(1000, 1e-4, 0.02).unwrap()).unwrap()
    }

    fn mixture() -> FamilySpec {
        FamilySpec::Mixture {
            p: 0.5,
            phi_schedule: PhiSchedule {
                mode: PhiMode::ByTimestep,
                start: 1.0,
                end: 0.5,
            },
        }
    }

    /// Per-element samples of one coordinate across many independent draws.
    fn column(draws: &[Tensor], j: usize) -> Vec<f64> {
        draws.iter().map(|d| d.data()[j]).collect()
    }

    #[test]
    fn no_noise_limit_at_first_step() {
        let p = process(FamilySpec::Gaussian);
        let x0 = Tensor::new(vec![0.5, -0.25, 1.0], vec![3]).unwrap();
        let mut rng = stream(1, domain::VERIFY, 0);
        let pair = closed_form_sample(&x0, 1, &p, &mut rng).unwrap();
        let bound = p.schedule().sigma(1) * pair.target.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        let drift = (1.0 - p.schedule().alpha_bar(1).sqrt()) * 1.0;
        assert!(pair.x_t.max_abs_diff(&x0) <= bound * (1.0 + 1e-12) + drift);
    }

    #[test]
    fn closed_form_moments_per_element() {
        let x0 = Tensor::new(vec![0.8, -0.4], vec![2]).unwrap();
        for (spec, t) in [(FamilySpec::Gaussian, 200), (FamilySpec::Gamma { theta0: 0.001 }, 500)] {
            let p = process(spec.clone());
            let mut rng = stream(2, domain::VERIFY, t as u64);
            let draws: Vec<Tensor> = (0..300_000)
                .map(|_| closed_form_sample(&x0, t, &p, &mut rng).unwrap().x_t)
                .collect();
            let s = p.schedule();
            for j in 0..2 {
                let m = Moments::of(&column(&draws, j));
                let want = s.alpha_bar(t).sqrt() * x0.data()[j];
                assert!((m.mean - want).abs() < 4.0 * m.se_mean, "{spec:?} {m:?}");
                assert!((m.var / s.one_minus_alpha_bar(t) - 1.0).abs() < 0.01, "{spec:?} {m:?}");
            }
        }
    }

    #[test]
    fn closed_form_is_seed_reproducible() {
        let p = process(FamilySpec::Gamma { theta0: 0.01 });
        let x0 = Tensor::new(vec![0.1; 16], vec![4, 4]).unwrap();
        let a = closed_form_sample(&x0, 77, &p, &mut stream(3, domain::NOISE, 0)).unwrap();
        let b = closed_form_sample(&x0, 77, &p, &mut stream(3, domain::NOISE, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_jump_matches_single_jumps() {
        let p = process(mixture());
        let x0 = Tensor::new(vec![0.1, 0.2, 0.3, 0.4], vec![2, 2]).unwrap();
        let ts = [3, 700];
        let (xb, tb) = closed_form_batch(&x0, &ts, &p, &mut stream(4, domain::NOISE, 0)).unwrap();
        let mut rng = stream(4, domain::NOISE, 0);
        for (i, &t) in ts.iter().enumerate() {
            let row = Tensor::new(x0.row(i).to_vec(), vec![2]).unwrap();
            let pair = closed_form_sample(&row, t, &p, &mut rng).unwrap();
            assert_eq!(pair.x_t.data(), xb.row(i));
            assert_eq!(pair.target.data(), tb.row(i));
        }
    }

    #[test]
    fn first_step_chain_equals_jump() {
        let p = process(FamilySpec::Gamma { theta0: 0.05 });
        let x0 = Tensor::zeros(vec![100_000]);
        let a = iterate_chain(&x0, 1, &p, &mut stream(5, domain::VERIFY, 0)).unwrap();
        let b = closed_form_sample(&x0, 1, &p, &mut stream(5, domain::VERIFY, 1)).unwrap().x_t;
        let (d, _) = ks_two_sample(a.data(), b.data()).unwrap();
        assert!(d < ks_critical_value(100_000, 100_000, 0.01), "D={d}");
    }

    #[test]
    fn skewed_gamma_chain_matches_jump() {
        // θ_0 = 0.05 keeps k̄_50 ≈ 12, visibly skewed
        let p = process(FamilySpec::Gamma { theta0: 0.05 });
        let n = 100_000;
        let x0 = Tensor::zeros(vec![n]);
        let a = iterate_chain(&x0, 50, &p, &mut stream(6, domain::VERIFY, 0)).unwrap();
        let b = closed_form_sample(&x0, 50, &p, &mut stream(6, domain::VERIFY, 1)).unwrap().x_t;
        let (d, _) = ks_two_sample(a.data(), b.data()).unwrap();
        assert!(d < 0.0122, "D={d}");
        assert!(d < ks_critical_value(n, n, 0.01), "D={d}");
        assert!(Moments::of(a.data()).skew > 0.3);
    }

    #[test]
    fn mixture_chain_moments() {
        let p = process(mixture());
        let n = 1_000_000;
        let x0 = Tensor::zeros(vec![n]);
        let x = iterate_chain(&x0, 50, &p, &mut stream(7, domain::VERIFY, 0)).unwrap();
        let m = Moments::of(x.data());
        assert!(m.mean.abs() < 4.0 * m.se_mean, "{m:?}");
        assert!((m.var / p.schedule().one_minus_alpha_bar(50) - 1.0).abs() < 0.01, "{m:?}");
    }

    #[test]
    fn residual_histograms() {
        let x0 = Tensor::new(vec![0.3; 100], vec![100]).unwrap();
        let p = process(FamilySpec::Gaussian);
        let t = 100;
        let h = residual_histogram(&x0, t, &p, &mut stream(8, domain::VERIFY, 0), 1000, 200, ResidualMode::ClosedForm).unwrap();
        let (mean, std, _) = h.binned_moments();
        let want = p.schedule().one_minus_alpha_bar(t).sqrt();
        assert!(mean.abs() < 0.01 * want);
        assert!((std / want - 1.0).abs() < 0.01);

        let g = process(FamilySpec::Gamma { theta0: 0.05 });
        let h = residual_histogram(&x0, 5, &g, &mut stream(8, domain::VERIFY, 1), 1000, 200, ResidualMode::Iterated).unwrap();
        assert!(h.binned_moments().2 > 0.0);

        let mut rng = stream(8, domain::VERIFY, 2);
        assert!(residual_histogram(&x0, 0, &p, &mut rng, 10, 50, ResidualMode::ClosedForm).is_err());
        assert!(residual_histogram(&x0, 5, &p, &mut rng, 10, 5, ResidualMode::ClosedForm).is_err());
        assert!(residual_histogram(&x0, 5, &p, &mut rng, 0, 50, ResidualMode::ClosedForm).is_err());
    }
}
