//! Histogram-fitting error as a function of the number of diffusion steps.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_histogram, FitFamily};
use crate::error::{Error, Result};
use crate::forward::{residual_histogram, ResidualMode};
use crate::noise::{FamilySpec, NoiseProcess};
use crate::rng::{domain, stream};
use crate::schedule::ScheduleSpec;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    /// Family driving the forward chain.
    pub family: FamilySpec,
    pub schedule: ScheduleSpec,
    pub t_list: Vec<usize>,
    /// Families fitted to every residual histogram.
    pub fit_families: Vec<FitFamily>,
    pub repeats: usize,
    pub bins: usize,
    /// Independent draws pooled into one histogram.
    pub draws: usize,
    /// Elements per draw (the size of `x_0`).
    pub elements: usize,
    #[serde(default)]
    pub mode: ResidualMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRepeat {
    pub t: usize,
    pub repeat: usize,
    /// `fit_mse` per entry of `fit_families`, same order.
    pub fit_mse: Vec<f64>,
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: usize,
    pub family: FitFamily,
    pub fit_mse: f64,
    /// Sample standard deviation over repeats; 0 for a single repeat.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCurve {
    pub spec: CurveSpec,
    pub rows: Vec<CurveRow>,
    pub repeats: Vec<CurveRepeat>,
}

pub fn fitting_error_curve(spec: &CurveSpec) -> Result<FitCurve> {
    if spec.repeats == 0 || spec.t_list.is_empty() || spec.fit_families.is_empty() {
        return Err(Error::invalid("fit curve needs repeats, timesteps and fit families"));
    }
    if spec.draws == 0 || spec.elements == 0 {
        return Err(Error::invalid("fit curve needs at least one draw of one element"));
    }
    let process = NoiseProcess::new(spec.family.clone(), spec.schedule.build()?)?;
    for &t in &spec.t_list {
        process.schedule().check_t(t)?;
    }
    // x_0 does not affect the residual of the forward chain
    let x0 = Tensor::zeros(vec![spec.elements]);
    let jobs: Vec<(usize, usize, usize)> = spec
        .t_list
        .iter()
        .enumerate()
        .flat_map(|(ti, &t)| (0..spec.repeats).map(move |r| (ti, t, r)))
        .collect();
    let repeats: Vec<CurveRepeat> = jobs
        .par_iter()
        .map(|&(ti, t, r)| {
            let mut rng = stream(spec.seed, domain::FIT, ((ti as u64) << 32) | r as u64);
            let h = residual_histogram(&x0, t, &process, &mut rng, spec.draws, spec.bins, spec.mode)?;
            let fits = spec
                .fit_families
                .iter()
                .map(|f| fit_histogram(&h, *f))
                .collect::<Result<Vec<_>>>()?;
            Ok(CurveRepeat {
                t,
                repeat: r,
                fit_mse: fits.iter().map(|f| f.fit_mse).collect(),
                converged: fits.iter().map(|f| f.converged).collect(),
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &t in &spec.t_list {
        for (fi, fam) in spec.fit_families.iter().enumerate() {
            let v: Vec<f64> = repeats
                .iter()
                .filter(|r| r.t == t)
                .map(|r| r.fit_mse[fi])
                .collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(CurveRow {
                t,
                family: *fam,
                fit_mse: mean,
                std,
            });
        }
    }
    Ok(FitCurve {
        spec: spec.clone(),
        rows,
        repeats,
    })
}

impl FitCurve {
    fn index_of(&self, f: FitFamily) -> Option<usize> {
        self.spec.fit_families.iter().position(|x| *x == f)
    }

    /// Fraction of repeats at `t` where `a`'s error is at most `b`'s.
    pub fn win_fraction(&self, t: usize, a: FitFamily, b: FitFamily) -> Option<f64> {
        let (ia, ib) = (self.index_of(a)?, self.index_of(b)?);
        let at: Vec<&CurveRepeat> = self.repeats.iter().filter(|r| r.t == t).collect();
        if at.is_empty() {
            return None;
        }
        let wins = at.iter().filter(|r| r.fit_mse[ia] <= r.fit_mse[ib]).count();
        Some(wins as f64 / at.len() as f64)
    }

    /// Ratio of mean errors `a / b` at `t`.
    pub fn mean_ratio(&self, t: usize, a: FitFamily, b: FitFamily) -> Option<f64> {
        let get = |f: FitFamily| {
            self.rows
                .iter()
                .find(|r| r.t == t && r.family == f)
                .map(|r| r.fit_mse)
        };
        Some(get(a)? / get(b)?)
    }

    /// CSV with header `t,family,fit_mse,std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,family,fit_mse,std\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:e},{:e}", r.t, r.family.name(), r.fit_mse, r.std);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(family: FamilySpec, t_list: Vec<usize>, repeats: usize) -> CurveSpec {
        CurveSpec {
            family,
            schedule: ScheduleSpec::Linear {
                steps: 1000,
                beta_start: 1e-4,
                beta_end: 0.02,
                beta: None,
            },
            t_list,
            fit_families: FitFamily::ALL.to_vec(),
            repeats,
            bins: 200,
            draws: 20,
            elements: 2000,
            mode: ResidualMode::ClosedForm,
            seed: 3,
        }
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let c = fitting_error_curve(&spec(FamilySpec::Gaussian, vec![10], 1)).unwrap();
        assert_eq!(c.rows.len(), 3);
        assert!(c.rows.iter().all(|r| r.std == 0.0));
        let csv = c.to_csv();
        assert!(csv.starts_with("t,family,fit_mse,std\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn strongly_skewed_residuals_favor_gamma() {
        // θ_0 = 0.05 gives k̄_t < 50 for every t ≤ 100
        let c = fitting_error_curve(&spec(FamilySpec::Gamma { theta0: 0.05 }, vec![20, 100], 10)).unwrap();
        for t in [20, 100] {
            let f = c.win_fraction(t, FitFamily::Gamma, FitFamily::Gaussian).unwrap();
            assert!(f >= 0.9, "t={t} win={f}");
        }
    }

    #[test]
    fn gaussian_chain_fits_are_comparable() {
        let c = fitting_error_curve(&spec(FamilySpec::Gaussian, vec![5, 300], 4)).unwrap();
        for t in [5, 300] {
            let g = c.mean_ratio(t, FitFamily::Gamma, FitFamily::Gaussian).unwrap();
            let m = c.mean_ratio(t, FitFamily::Mixture, FitFamily::Gaussian).unwrap();
            assert!((0.5..=2.0).contains(&g), "t={t} gamma/gauss={g}");
            assert!((0.5..=2.0).contains(&m), "t={t} mixture/gauss={m}");
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let s = spec(FamilySpec::Gamma { theta0: 0.01 }, vec![1, 20], 3);
        assert_eq!(fitting_error_curve(&s).unwrap(), fitting_error_curve(&s).unwrap());
    }
}
