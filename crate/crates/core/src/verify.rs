//! Named property suites with JSON-serializable reports.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{closed_form_sample, iterate_chain};
use crate::model::{gradient_check, Architecture, Conditioning, Denoiser};
use crate::noise::{gamma_params, mixture_params, FamilySpec, NoiseProcess, PhiMode, PhiSchedule};
use crate::reverse::{sample, timestep_subsequence, PointMassOracle, SamplerConfig, SamplerKind};
use crate::rng::{domain, stream};
use crate::schedule::{linear_schedule, NoiseSchedule};
use crate::stats::{ks_critical_value, ks_two_sample, Moments};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma1,
    Lemma2,
    ClosedFormKs,
    VarianceBudget,
    Gradcheck,
    OracleSampler,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Lemma1,
        Suite::Lemma2,
        Suite::ClosedFormKs,
        Suite::VarianceBudget,
        Suite::Gradcheck,
        Suite::OracleSampler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::ClosedFormKs => "closed_form_ks",
            Suite::VarianceBudget => "variance_budget",
            Suite::Gradcheck => "gradcheck",
            Suite::OracleSampler => "oracle_sampler",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown suite '{s}'")))
    }

    /// Monte-Carlo sample size used when none is given.
    pub fn default_n(self) -> usize {
        match self {
            Suite::Lemma1 | Suite::VarianceBudget => 1_000_000,
            Suite::ClosedFormKs => 100_000,
            _ => 0,
        }
    }
}

/// One check passes when `statistic <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn new(check: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            check: check.into(),
            statistic,
            threshold,
            pass: statistic <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: Suite,
    pub n: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

pub fn run_suite(suite: Suite, n: Option<usize>, seed: u64) -> Result<Report> {
    let n = n.unwrap_or(suite.default_n());
    let checks = match suite {
        Suite::Lemma1 => lemma1(n, seed)?,
        Suite::Lemma2 => lemma2(seed)?,
        Suite::ClosedFormKs => closed_form_ks(n, seed, &[1, 5, 20, 50, 200], 5)?,
        Suite::VarianceBudget => variance_budget(n, seed)?,
        Suite::Gradcheck => gradcheck(seed)?,
        Suite::OracleSampler => oracle_sampler(seed)?,
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(Report {
        suite,
        n,
        seed,
        checks,
        pass,
    })
}

fn need_mc(n: usize) -> Result<()> {
    if n < 1000 {
        return Err(Error::invalid(format!("Monte-Carlo checks need n >= 1000, got {n}")));
    }
    Ok(())
}

fn moment_checks(label: &str, x: &[f64], mean: f64, var: f64, out: &mut Vec<Check>) {
    let m = Moments::of(x);
    out.push(Check::new(format!("{label} mean/stderr"), (m.mean - mean).abs() / m.se_mean, 4.0));
    out.push(Check::new(format!("{label} variance rel err"), (m.var / var - 1.0).abs(), 0.01));
}

/// Zero mean and unit variance of the mixture for 20 random `(p, φ)`.
pub fn lemma1(n: usize, seed: u64) -> Result<Vec<Check>> {
    need_mc(n)?;
    let mut pick = stream(seed, domain::VERIFY, 0);
    let mut out = Vec::new();
    for i in 0..20 {
        let p = pick.random_range(0.05..0.95);
        let phi = 1.0 - pick.random_range(0.0..0.9);
        let m = mixture_params(p, phi)?;
        let label = format!("p={p:.4} phi={phi:.4}");
        out.push(Check::new(format!("{label} exact mean"), m.mean().abs(), 1e-12));
        out.push(Check::new(format!("{label} exact variance"), (m.variance() - 1.0).abs(), 1e-12));
        let mut rng = stream(seed, domain::VERIFY, 1 + i);
        let x: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        moment_checks(&format!("{label} MC"), &x, 0.0, 1.0, &mut out);
    }
    Ok(out)
}

fn random_schedule<R: Rng + ?Sized>(rng: &mut R) -> Result<NoiseSchedule> {
    let len = rng.random_range(10..=2000);
    let start = 10f64.powf(rng.random_range(-5.0..-2.0));
    let end = (start * 10f64.powf(rng.random_range(0.0..2.5))).min(0.5);
    linear_schedule(len, start, end)
}

/// `k_t θ_t² = β_t` and `k̄_t θ_t² = 1 - ᾱ_t` at every `t`.
pub fn lemma2(seed: u64) -> Result<Vec<Check>> {
    let mut rng = stream(seed, domain::VERIFY, 0);
    let mut cases = vec![(linear_schedule(1000, 1e-4, 0.02)?, 0.001, "linear(1000, 1e-4, 0.02)".to_string())];
    for i in 0..10 {
        let s = random_schedule(&mut rng)?;
        let theta0 = 10f64.powf(rng.random_range(-4.0..-1.0));
        cases.push((s, theta0, format!("random schedule {i}")));
    }
    let mut out = Vec::new();
    for (s, theta0, label) in cases {
        let g = gamma_params(&s, theta0)?;
        let (mut step, mut total) = (0.0f64, 0.0f64);
        for t in 1..=s.len() {
            let th2 = g.theta(t) * g.theta(t);
            step = step.max((g.k(t) * th2 / s.beta(t) - 1.0).abs());
            total = total.max((g.k_bar(t) * th2 / s.one_minus_alpha_bar(t) - 1.0).abs());
        }
        let tag = format!("{label} T={} theta0={theta0:.3e}", s.len());
        out.push(Check::new(format!("{tag} k*theta^2=beta"), step, 1e-10));
        out.push(Check::new(format!("{tag} kbar*theta^2=1-alpha_bar"), total, 1e-10));
    }
    Ok(out)
}

pub fn reference_mixture() -> FamilySpec {
    FamilySpec::Mixture {
        p: 0.5,
        phi_schedule: PhiSchedule {
            mode: PhiMode::ByTimestep,
            start: 1.0,
            end: 0.5,
        },
    }
}

/// Iterated chain against the closed-form jump: KS for Gamma and Gaussian,
/// moments for the mixture.
pub fn closed_form_ks(n: usize, seed: u64, ts: &[usize], seeds: u64) -> Result<Vec<Check>> {
    need_mc(n)?;
    let s = linear_schedule(1000, 1e-4, 0.02)?;
    let crit = ks_critical_value(n, n, 0.01);
    let x0 = Tensor::filled(vec![n], 0.5);
    let mut out = Vec::new();
    let families = [
        ("gamma theta0=0.001", FamilySpec::Gamma { theta0: 0.001 }),
        ("gamma theta0=0.05", FamilySpec::Gamma { theta0: 0.05 }),
        ("gaussian", FamilySpec::Gaussian),
        ("mixture", reference_mixture()),
    ];
    for (fi, (label, spec)) in families.into_iter().enumerate() {
        let p = NoiseProcess::new(spec.clone(), s.clone())?;
        for (ti, &t) in ts.iter().enumerate() {
            for k in 0..seeds {
                let idx = ((fi as u64) << 40) | ((ti as u64) << 20) | k;
                let iterated = iterate_chain(&x0, t, &p, &mut stream(seed, domain::VERIFY, 2 * idx))?;
                let jumped = closed_form_sample(&x0, t, &p, &mut stream(seed, domain::VERIFY, 2 * idx + 1))?.x_t;
                let tag = format!("{label} t={t} seed={k}");
                if matches!(spec, FamilySpec::Mixture { .. }) {
                    let mean = s.alpha_bar(t).sqrt() * 0.5;
                    let var = s.one_minus_alpha_bar(t);
                    moment_checks(&format!("{tag} iterated"), iterated.data(), mean, var, &mut out);
                    moment_checks(&format!("{tag} closed form"), jumped.data(), mean, var, &mut out);
                } else {
                    let (d, _) = ks_two_sample(iterated.data(), jumped.data())?;
                    out.push(Check::new(format!("{tag} KS D"), d, crit));
                }
            }
        }
    }
    Ok(out)
}

/// Accumulated noise has variance `1 - ᾱ_t` and the normalized target has
/// unit variance, for every family.
pub fn variance_budget(n: usize, seed: u64) -> Result<Vec<Check>> {
    need_mc(n)?;
    let s = linear_schedule(1000, 1e-4, 0.02)?;
    let families = [
        ("gaussian", FamilySpec::Gaussian),
        ("mixture", reference_mixture()),
        ("gamma", FamilySpec::Gamma { theta0: 0.001 }),
    ];
    let x0 = Tensor::zeros(vec![n]);
    let mut out = Vec::new();
    for (fi, (label, spec)) in families.into_iter().enumerate() {
        let p = NoiseProcess::new(spec, s.clone())?;
        for (ti, t) in [1usize, 10, 100, 1000].into_iter().enumerate() {
            let pair = closed_form_sample(&x0, t, &p, &mut stream(seed, domain::VERIFY, (fi * 8 + ti) as u64))?;
            moment_checks(&format!("{label} t={t} noise"), pair.x_t.data(), 0.0, s.one_minus_alpha_bar(t), &mut out);
            moment_checks(&format!("{label} t={t} target"), pair.target.data(), 0.0, 1.0, &mut out);
        }
        if let Some(g) = p.gamma() {
            let t = s.len();
            let rel = (g.k_bar(t) * g.theta(t).powi(2) / s.one_minus_alpha_bar(t) - 1.0).abs();
            out.push(Check::new(format!("{label} kbar_T*theta_T^2=1-alpha_bar_T"), rel, 1e-10));
        }
    }
    Ok(out)
}

/// Finite-difference check over depths 1-3, widths 4-64 and both
/// conditioning modes.
pub fn gradcheck(seed: u64) -> Result<Vec<Check>> {
    let hidden: [&[usize]; 7] = [&[], &[4], &[64], &[16, 8], &[4, 64], &[8, 16, 32], &[64, 4, 4]];
    let mut out = Vec::new();
    for (ci, conditioning) in [Conditioning::TimestepEmbedding, Conditioning::NoiseLevelScalar].into_iter().enumerate() {
        for (hi, h) in hidden.iter().enumerate() {
            let arch = Architecture {
                data_shape: vec![8],
                hidden: h.to_vec(),
                conditioning,
                fourier_features: 4,
            };
            let idx = (ci * 16 + hi) as u64;
            let model = Denoiser::new(arch, &mut stream(seed, domain::INIT, idx))?;
            let mut rng = stream(seed, domain::VERIFY, idx);
            let mut draw = |len: usize, lo: f64, hi: f64| (0..len).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
            let x = Tensor::new(draw(32, -2.0, 2.0), vec![4, 8])?;
            let c = draw(4, 0.0, 1.0);
            let y = Tensor::new(draw(32, -2.0, 2.0), vec![4, 8])?;
            let r = gradient_check(&model, &x, &c, &y, 1e-5, 1e-6)?;
            out.push(Check::new(
                format!("hidden={h:?} {conditioning:?} ({} checked, {} at kinks)", r.checked, r.skipped),
                r.max_rel_err,
                1e-4,
            ));
        }
    }
    Ok(out)
}

/// Point-mass data with the exact predictor: DDIM η=0 over 50 steps
/// returns the point.
pub fn oracle_sampler(seed: u64) -> Result<Vec<Check>> {
    let s = linear_schedule(1000, 1e-4, 0.02)?;
    let x0 = Tensor::new(vec![0.8, -0.35, 0.1], vec![3])?;
    let oracle = PointMassOracle { x0: x0.clone() };
    let families = [
        ("gaussian", FamilySpec::Gaussian),
        ("mixture", reference_mixture()),
        ("gamma", FamilySpec::Gamma { theta0: 0.001 }),
    ];
    let mut out = Vec::new();
    for (fi, (label, spec)) in families.into_iter().enumerate() {
        let p = NoiseProcess::new(spec, s.clone())?;
        let cfg = SamplerConfig {
            kind: SamplerKind::Ddim,
            eta: 0.0,
            steps: timestep_subsequence(s.len(), 50)?,
            clip_x0: false,
            record_every: 0,
        };
        let traj = sample(&oracle, &p, &cfg, 64, &mut stream(seed, domain::SAMPLE, fi as u64))?;
        let err = (0..traj.x0.rows())
            .flat_map(|i| traj.x0.row(i).iter().zip(x0.data()).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        out.push(Check::new(format!("{label} ddim eta=0 50 steps max abs err"), err, 1e-6));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
            assert_eq!(serde_json::to_value(s).unwrap(), s.name());
        }
        assert!(Suite::parse("lemma3").is_err());
    }

    #[test]
    fn small_suites_pass() {
        for s in [Suite::Lemma2, Suite::Gradcheck, Suite::OracleSampler] {
            let r = run_suite(s, None, 1).unwrap();
            assert!(r.pass, "{:?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
        }
    }

    #[test]
    fn failing_check_is_reported() {
        let c = Check::new("x", 2.0, 1.0);
        assert!(!c.pass);
        assert!(lemma1(10, 0).is_err());
    }
}
