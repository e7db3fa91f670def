//! Noise schedules and their derived per-step quantities.
//!
//! Timesteps are 1-based at the API (`t ∈ [1, T]`) and 0-based in storage.
//! Every accessor taking `t` converts with `t - 1`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How a schedule was built. Serialized with its materialized `beta` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleSpec {
    Linear {
        #[serde(rename = "T")]
        steps: usize,
        beta_start: f64,
        beta_end: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<Vec<f64>>,
    },
    Fibonacci {
        #[serde(rename = "T")]
        steps: usize,
        beta_1: f64,
        beta_2: f64,
        beta_max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta: Option<Vec<f64>>,
    },
    Explicit {
        #[serde(rename = "T")]
        steps: usize,
        beta: Vec<f64>,
    },
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        let (schedule, listed) = match self {
            ScheduleSpec::Linear {
                steps,
                beta_start,
                beta_end,
                beta,
            } => (linear_schedule(*steps, *beta_start, *beta_end)?, beta.as_ref()),
            ScheduleSpec::Fibonacci {
                steps,
                beta_1,
                beta_2,
                beta_max,
                beta,
            } => (
                fibonacci_schedule(*steps, *beta_1, *beta_2, *beta_max)?,
                beta.as_ref(),
            ),
            ScheduleSpec::Explicit { steps, beta } => {
                if beta.len() != *steps {
                    return Err(Error::invalid(format!(
                        "explicit schedule declares T={steps} but lists {} betas",
                        beta.len()
                    )));
                }
                (NoiseSchedule::from_betas(beta.clone())?, None)
            }
        };
        if let Some(listed) = listed {
            let matches = listed.len() == schedule.len()
                && listed
                    .iter()
                    .zip(&schedule.beta)
                    .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs());
            if !matches {
                return Err(Error::invalid(
                    "listed beta array disagrees with the schedule parameters",
                ));
            }
        }
        Ok(schedule)
    }
}

/// A `T`-step noise schedule with all derived arrays precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    spec: ScheduleSpec,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    /// `1 - ᾱ_t` evaluated as `-expm1(Σ log1p(-β_i))`, accurate when ᾱ_t ≈ 1.
    one_minus_alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

pub fn linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule length T must be at least 1"));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!(
            "linear schedule needs 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let beta = if steps == 1 {
        vec![beta_start]
    } else {
        let span = beta_end - beta_start;
        let last = (steps - 1) as f64;
        (0..steps)
            .map(|i| beta_start + span * (i as f64 / last))
            .collect()
    };
    NoiseSchedule::with_spec(
        beta,
        ScheduleSpec::Linear {
            steps,
            beta_start,
            beta_end,
            beta: None,
        },
    )
}

/// `β_t = β_{t-1} + β_{t-2}` from two seeds, every entry clipped to `beta_max`.
pub fn fibonacci_schedule(
    steps: usize,
    beta_1: f64,
    beta_2: f64,
    beta_max: f64,
) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule length T must be at least 1"));
    }
    if !(beta_max > 0.0 && beta_max < 1.0) {
        return Err(Error::invalid(format!(
            "fibonacci clip ceiling must lie in (0, 1), got {beta_max}"
        )));
    }
    if !(beta_1 > 0.0 && beta_2 > 0.0) {
        return Err(Error::invalid("fibonacci seeds must be positive"));
    }
    let mut raw = Vec::with_capacity(steps);
    raw.push(beta_1);
    if steps > 1 {
        raw.push(beta_2);
    }
    while raw.len() < steps {
        let n = raw.len();
        raw.push(raw[n - 1] + raw[n - 2]);
    }
    let beta = raw.into_iter().map(|b| b.min(beta_max)).collect();
    NoiseSchedule::with_spec(
        beta,
        ScheduleSpec::Fibonacci {
            steps,
            beta_1,
            beta_2,
            beta_max,
            beta: None,
        },
    )
}

impl NoiseSchedule {
    /// Explicit schedule from a β array (e.g. one found by an external search).
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        let steps = beta.len();
        Self::with_spec(
            beta,
            ScheduleSpec::Explicit {
                steps,
                beta: Vec::new(),
            },
        )
    }

    fn with_spec(beta: Vec<f64>, spec: ScheduleSpec) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::invalid("schedule length T must be at least 1"));
        }
        if let Some((i, b)) = beta
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(Error::invalid(format!("beta_{} = {b} outside (0, 1)", i + 1)));
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut one_minus_alpha_bar = Vec::with_capacity(beta.len());
        let mut prod = 1.0;
        let mut log_sum = 0.0;
        for (a, b) in alpha.iter().zip(&beta) {
            prod *= a;
            log_sum += (-b).ln_1p();
            alpha_bar.push(prod);
            one_minus_alpha_bar.push(-log_sum.exp_m1());
        }
        let sigma = beta.iter().map(|b| b.sqrt()).collect();
        let spec = match spec {
            ScheduleSpec::Explicit { steps, .. } => ScheduleSpec::Explicit {
                steps,
                beta: beta.clone(),
            },
            other => other,
        };
        Ok(Self {
            spec,
            beta,
            alpha,
            alpha_bar,
            one_minus_alpha_bar,
            sigma,
        })
    }

    /// Diffusion length `T`.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::TimestepOutOfRange { t, len: self.len() });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`; `t = 0` gives the empty product 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    /// `1 - ᾱ_t`; `t = 0` gives 0.
    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.one_minus_alpha_bar[t - 1]
        }
    }

    /// Reverse-process noise scale, `σ_t = √β_t`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Closed-form jump coefficients `(√ᾱ_t, √(1-ᾱ_t))`.
    pub fn snr_stats(&self, t: usize) -> Result<(f64, f64)> {
        self.check_t(t)?;
        Ok((self.alpha_bar(t).sqrt(), self.one_minus_alpha_bar(t).sqrt()))
    }

    /// Spec with the materialized β array, suitable for serialization.
    pub fn spec(&self) -> ScheduleSpec {
        match &self.spec {
            ScheduleSpec::Linear {
                steps,
                beta_start,
                beta_end,
                ..
            } => ScheduleSpec::Linear {
                steps: *steps,
                beta_start: *beta_start,
                beta_end: *beta_end,
                beta: Some(self.beta.clone()),
            },
            ScheduleSpec::Fibonacci {
                steps,
                beta_1,
                beta_2,
                beta_max,
                ..
            } => ScheduleSpec::Fibonacci {
                steps: *steps,
                beta_1: *beta_1,
                beta_2: *beta_2,
                beta_max: *beta_max,
                beta: Some(self.beta.clone()),
            },
            explicit => explicit.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.spec()).expect("schedule spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScheduleSpec = serde_json::from_str(text)?;
        spec.build()
    }

    /// Content hash over `T` and the exact β bits. Stable across builds.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        for b in &self.beta {
            h.update(b.to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// Independent route to `1 - ᾱ_t`: `Σ_i β_i ᾱ_t / ᾱ_i` with ᾱ from a fresh product.
    fn telescoped(beta: &[f64], t: usize) -> f64 {
        let prod = |upto: usize| beta[..upto].iter().map(|b| 1.0 - b).product::<f64>();
        let at = prod(t);
        (1..=t).map(|i| beta[i - 1] * at / prod(i)).sum()
    }

    #[test]
    fn linear_endpoints_and_spacing() {
        let s = linear_schedule(1000, 1e-4, 0.02).unwrap();
        assert_eq!(s.beta(1), 1e-4);
        assert!(rel(s.beta(1000), 0.02) < 1e-15);
        let step = (0.02 - 1e-4) / 999.0;
        for t in 2..=1000 {
            assert!((s.beta(t) - s.beta(t - 1) - step).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_schedule() {
        let s = linear_schedule(1, 0.5, 0.5).unwrap();
        assert_eq!(s.betas(), &[0.5]);
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.sigma(1), 0.5f64.sqrt());
    }

    #[test]
    fn constant_schedule_product() {
        let s = linear_schedule(10, 0.1, 0.1).unwrap();
        let direct = 0.9f64.powi(10);
        assert!(rel(s.alpha_bar(10), 0.348_678_440_1) < 1e-10);
        assert!(rel(s.alpha_bar(10), direct) < 1e-12);
        let (m, n) = s.snr_stats(10).unwrap();
        assert!(rel(m, 0.9f64.powi(5)) < 1e-12);
        assert!(rel(n, (1.0 - direct).sqrt()) < 1e-12);
    }

    #[test]
    fn snr_at_first_step_and_pure_noise_limit() {
        let s = linear_schedule(1000, 1e-4, 0.02).unwrap();
        let (m, n) = s.snr_stats(1).unwrap();
        assert!(rel(m, 0.9999f64.sqrt()) < 1e-14);
        assert!(rel(n, 1e-4f64.sqrt()) < 1e-10);
        let (m, n) = s.snr_stats(1000).unwrap();
        assert!(m < 0.01);
        assert!(n > 0.9999);
        assert!(s.snr_stats(0).is_err());
        assert!(s.snr_stats(1001).is_err());
    }

    #[test]
    fn rejects_bad_linear_parameters() {
        assert!(linear_schedule(0, 0.1, 0.2).is_err());
        assert!(linear_schedule(10, 0.0, 0.2).is_err());
        assert!(linear_schedule(10, 0.3, 0.2).is_err());
        assert!(linear_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn fibonacci_recurrence() {
        let s = fibonacci_schedule(5, 1e-6, 2e-6, 0.5).unwrap();
        let expected = [1e-6, 2e-6, 3e-6, 5e-6, 8e-6];
        for (b, e) in s.betas().iter().zip(expected) {
            assert!(rel(*b, e) < 1e-12);
        }
        let s = fibonacci_schedule(2, 0.01, 0.03, 0.5).unwrap();
        assert_eq!(s.betas(), &[0.01, 0.03]);
        let s = fibonacci_schedule(25, 1e-6, 2e-6, 0.9).unwrap();
        assert!(s.betas().windows(2).all(|w| w[1] > w[0]));
        assert!(s.betas().iter().all(|b| *b < 1.0));
    }

    #[test]
    fn fibonacci_clips_and_rejects_ceiling_at_one() {
        let s = fibonacci_schedule(40, 1e-3, 2e-3, 0.3).unwrap();
        assert_eq!(s.beta(40), 0.3);
        assert!(fibonacci_schedule(40, 1e-3, 2e-3, 1.0).is_err());
        assert!(fibonacci_schedule(4, -1e-3, 2e-3, 0.5).is_err());
    }

    #[test]
    fn json_round_trip_and_explicit_import() {
        let s = linear_schedule(20, 1e-3, 0.1).unwrap();
        let back = NoiseSchedule::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.hash(), s.hash());

        let text = r#"{"type":"explicit","T":3,"beta":[0.1,0.2,0.3]}"#;
        let e = NoiseSchedule::from_json(text).unwrap();
        assert_eq!(e.betas(), &[0.1, 0.2, 0.3]);
        assert!(NoiseSchedule::from_json(r#"{"type":"explicit","T":2,"beta":[0.1,0.2,0.3]}"#).is_err());
        assert!(NoiseSchedule::from_json(r#"{"type":"linear","T":2,"beta_start":0.1,"beta_end":0.2,"bogus":1}"#).is_err());
        assert!(NoiseSchedule::from_json(r#"{"type":"linear","T":2,"beta_start":0.1,"beta_end":0.2,"beta":[0.1,0.3]}"#).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = linear_schedule(100, 1e-4, 0.02).unwrap();
        let b = linear_schedule(100, 1e-4, 0.021).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    proptest! {
        #[test]
        fn derived_arrays_are_consistent(
            steps in 1usize..300,
            lo in 1e-5f64..0.05,
            width in 0.0f64..0.3,
        ) {
            let s = linear_schedule(steps, lo, lo + width).unwrap();
            for t in 1..=steps {
                prop_assert_eq!(s.alpha(t), 1.0 - s.beta(t));
                prop_assert!(rel(s.alpha_bar(t) / s.alpha_bar(t - 1), s.alpha(t)) < 1e-12);
                let (m, n) = s.snr_stats(t).unwrap();
                prop_assert!((m * m + n * n - 1.0).abs() < 1e-12);
                prop_assert!(rel(s.sigma(t) * s.sigma(t), s.beta(t)) < 1e-14);
                if t > 1 {
                    prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                }
            }
            prop_assert!(s.alpha_bar(steps) > 0.0 && s.alpha_bar(1) < 1.0);
        }

        #[test]
        fn telescoping_identity(beta in prop::collection::vec(1e-5f64..0.3, 1..120)) {
            let s = NoiseSchedule::from_betas(beta.clone()).unwrap();
            for t in 1..=beta.len() {
                prop_assert!(rel(telescoped(&beta, t), s.one_minus_alpha_bar(t)) < 1e-12);
            }
        }
    }
}
