//! Training loops for all three noise families.
//!
//! Each optimizer step `s` draws its batch from `stream(seed, DATA, s)` and
//! its timesteps and noise from `stream(seed, NOISE, s)`, so a run resumed
//! from a checkpoint replays exactly the draws the uninterrupted run would
//! have made.

mod data;
mod eval;
mod idx;

pub use data::{checkerboard_point, Dataset, DatasetSpec};
pub use eval::{evaluate_ring, RingReport};
pub use idx::IdxImages;

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::closed_form_batch;
use crate::model::{save_checkpoint, AdamState, Architecture, Checkpoint, Conditioning, Denoiser};
use crate::noise::{FamilySpec, NoiseProcess};
use crate::rng::{domain, stream};
use crate::schedule::ScheduleSpec;

pub const CONFIG_VERSION: u32 = 1;
const PLATEAU_WINDOW: usize = 500;
const PLATEAU_TOL: f64 = 1e-3;

fn default_fourier() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub conditioning: Conditioning,
    #[serde(default = "default_fourier")]
    pub fourier_features: usize,
}

impl ModelSpec {
    pub fn architecture(&self, data_shape: &[usize]) -> Architecture {
        Architecture {
            data_shape: data_shape.to_vec(),
            hidden: self.hidden.clone(),
            conditioning: self.conditioning,
            fourier_features: self.fourier_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    /// Required by the time training starts; the CLI can fill it in.
    #[serde(default)]
    pub seed: Option<u64>,
    pub family: FamilySpec,
    pub schedule: ScheduleSpec,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    pub batch_size: usize,
    pub steps: u64,
    pub lr: f64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    /// Stop once the mean loss of the last 500 steps moves less than 0.1%
    /// from the 500 before.
    #[serde(default)]
    pub early_stop: bool,
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate_fields()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("seed: missing (set it in the config, --seed or GDIFF_SEED)".into()))
    }

    fn validate_fields(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!("version: expected {CONFIG_VERSION}, got {}", self.version)));
        }
        let positive = [
            ("batch_size", self.batch_size as u64),
            ("steps", self.steps),
            ("checkpoint_every", self.checkpoint_every),
            ("log_every", self.log_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name}: must be positive")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr: must be positive, got {}", self.lr)));
        }
        self.family.validate().map_err(|e| Error::Config(format!("family: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_fields()?;
        self.seed()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub loss: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Default)]
pub struct TrainRun {
    /// Directory for `checkpoint.gdnm` and `metrics.jsonl`.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
    /// Zero every wall-clock field so outputs are byte-identical.
    pub reproducible: bool,
    /// Stop after this step even if the budget is larger.
    pub stop_at: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricRow>,
    /// Loss of every step run in this call.
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// One uniform draw from `{1..=T}` per example.
pub fn sample_timesteps<R: Rng + ?Sized>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..=len)).collect()
}

pub const CHECKPOINT_FILE: &str = "checkpoint.gdnm";
pub const METRICS_FILE: &str = "metrics.jsonl";

pub fn train_loop(cfg: &TrainConfig, run: TrainRun) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let schedule = cfg.schedule.build()?;
    let process = NoiseProcess::new(cfg.family.clone(), schedule.clone())?;
    let dataset = Dataset::new(cfg.dataset.clone())?;
    let arch = cfg.model.architecture(dataset.data_shape());
    let len = schedule.len();

    let (mut model, mut adam, mut step, mut recent) = match run.resume {
        Some(ck) => {
            if ck.model.architecture() != &arch {
                return Err(Error::Config("resume: checkpoint architecture differs from config".into()));
            }
            if ck.family != cfg.family {
                return Err(Error::Config("resume: checkpoint family differs from config".into()));
            }
            if ck.schedule.hash() != schedule.hash() {
                return Err(Error::Config("resume: checkpoint schedule hash differs from config".into()));
            }
            let adam = ck.adam.ok_or_else(|| Error::Config("resume: checkpoint has no optimizer state".into()))?;
            let recent: VecDeque<f64> = serde_json::from_value(ck.extra["recent_losses"].clone()).unwrap_or_default();
            (ck.model, adam, ck.step, recent)
        }
        None => {
            let model = Denoiser::new(arch.clone(), &mut stream(seed, domain::INIT, 0))?;
            let adam = AdamState::new(model.params().len(), cfg.lr);
            (model, adam, 0, VecDeque::new())
        }
    };
    adam.lr = cfg.lr;

    let mut metrics_out = match &run.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(METRICS_FILE);
            let file = if step > 0 {
                OpenOptions::new().append(true).create(true).open(&path)
            } else {
                File::create(&path)
            }
            .map_err(|e| Error::io(&path, e))?;
            Some((path, BufWriter::new(file)))
        }
        None => None,
    };

    let start = Instant::now();
    let last = run.stop_at.map_or(cfg.steps, |s| s.min(cfg.steps));
    let mut metrics = Vec::new();
    let mut losses = Vec::new();
    let mut stopped_early = false;
    let snapshot = |model: &Denoiser, adam: &AdamState, step: u64, recent: &VecDeque<f64>| Checkpoint {
        model: model.clone(),
        family: cfg.family.clone(),
        schedule: schedule.clone(),
        step,
        adam: Some(adam.clone()),
        extra: serde_json::json!({ "config": cfg, "recent_losses": recent }),
    };

    while step < last {
        step += 1;
        let x0 = dataset.sample(cfg.batch_size, &mut stream(seed, domain::DATA, step));
        let mut noise_rng = stream(seed, domain::NOISE, step);
        let ts = sample_timesteps(len, cfg.batch_size, &mut noise_rng);
        let (x_t, target) = closed_form_batch(&x0, &ts, &process, &mut noise_rng)?;
        let cond: Vec<f64> = ts.iter().map(|&t| arch.conditioning.value(t, &schedule)).collect();
        let (loss, grads) = model.loss_and_grad(&x_t, &cond, &target)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss {loss} at step {step}; batch seed {seed}, data stream {step}, noise stream {step}, t = {ts:?}"
            )));
        }
        adam.step(model.params_mut(), &grads)?;
        losses.push(loss);
        recent.push_back(loss);
        if recent.len() > 2 * PLATEAU_WINDOW {
            recent.pop_front();
        }

        let plateau = cfg.early_stop && recent.len() == 2 * PLATEAU_WINDOW && {
            let old: f64 = recent.iter().take(PLATEAU_WINDOW).sum();
            let new: f64 = recent.iter().skip(PLATEAU_WINDOW).sum();
            ((new - old) / old).abs() < PLATEAU_TOL
        };
        let done = step == last || plateau;

        if step % cfg.log_every == 0 || done {
            let elapsed_s = if run.reproducible { 0.0 } else { start.elapsed().as_secs_f64() };
            let row = MetricRow { step, loss, elapsed_s };
            if let Some((path, w)) = metrics_out.as_mut() {
                serde_json::to_writer(&mut *w, &row)?;
                w.write_all(b"\n").map_err(|e| Error::io(&*path, e))?;
            }
            metrics.push(row);
        }
        if let Some(dir) = &run.out_dir {
            if step % cfg.checkpoint_every == 0 || done {
                save_checkpoint(&snapshot(&model, &adam, step, &recent), dir.join(CHECKPOINT_FILE))?;
            }
        }
        if plateau {
            stopped_early = true;
            break;
        }
    }
    if let Some((path, mut w)) = metrics_out {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome {
        checkpoint: snapshot(&model, &adam, step, &recent),
        metrics,
        losses,
        stopped_early,
    })
}

/// Reads a config file, mapping parse failures to config errors.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_checkpoint;

    fn config(steps: u64) -> TrainConfig {
        TrainConfig::from_json(&format!(
            r#"{{
                "version": 1,
                "seed": 11,
                "family": {{"family": "gamma", "theta0": 0.001}},
                "schedule": {{"type": "linear", "T": 100, "beta_start": 0.001, "beta_end": 0.2}},
                "dataset": {{"kind": "ring8"}},
                "model": {{"hidden": [32, 32]}},
                "batch_size": 32,
                "steps": {steps},
                "lr": 0.001,
                "checkpoint_every": 50,
                "log_every": 10
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn config_rejects_unknown_and_invalid_fields() {
        let good = serde_json::to_value(config(10)).unwrap();
        let mut bad = good.clone();
        bad["learning_rate"] = serde_json::json!(0.1);
        assert!(TrainConfig::from_json(&bad.to_string()).is_err());
        let mut bad = good.clone();
        bad["steps"] = serde_json::json!(0);
        assert!(matches!(TrainConfig::from_json(&bad.to_string()), Err(Error::Config(m)) if m.starts_with("steps")));
        let mut bad = good.clone();
        bad["version"] = serde_json::json!(2);
        assert!(TrainConfig::from_json(&bad.to_string()).is_err());
        let mut bad = good.clone();
        bad["family"] = serde_json::json!({"family": "poisson"});
        assert!(TrainConfig::from_json(&bad.to_string()).is_err());
        let mut no_seed = good;
        no_seed.as_object_mut().unwrap().remove("seed");
        let cfg = TrainConfig::from_json(&no_seed.to_string()).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn timesteps_are_uniform() {
        let len = 100;
        let n = 100_000;
        let ts = sample_timesteps(len, n, &mut stream(1, domain::NOISE, 0));
        let mut counts = vec![0usize; len];
        ts.iter().for_each(|t| counts[t - 1] += 1);
        let e = n as f64 / len as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // upper 1% point of chi-square with 99 degrees of freedom
        assert!(chi2 < 134.642, "{chi2}");
        assert!(ts.iter().all(|t| (1..=len).contains(t)));
    }

    #[test]
    fn same_seed_same_losses() {
        let a = train_loop(&config(60), TrainRun::default()).unwrap();
        let b = train_loop(&config(60), TrainRun::default()).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.checkpoint.model, b.checkpoint.model);
        assert_eq!(a.metrics.len(), 6);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let full = train_loop(&config(200), TrainRun::default()).unwrap();
        let first = train_loop(
            &config(200),
            TrainRun {
                out_dir: Some(dir.path().to_path_buf()),
                stop_at: Some(100),
                reproducible: true,
                ..Default::default()
            },
        )
        .unwrap();
        let ck = load_checkpoint(dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(ck.step, 100);
        let second = train_loop(
            &config(200),
            TrainRun {
                out_dir: Some(dir.path().to_path_buf()),
                resume: Some(ck),
                reproducible: true,
                ..Default::default()
            },
        )
        .unwrap();
        let joined: Vec<f64> = first.losses.iter().chain(&second.losses).copied().collect();
        assert_eq!(joined, full.losses);
        assert_eq!(second.checkpoint.model, full.checkpoint.model);
        let log = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(log.lines().count(), 20);
        let row: MetricRow = serde_json::from_str(log.lines().last().unwrap()).unwrap();
        assert_eq!((row.step, row.elapsed_s), (200, 0.0));
    }

    #[test]
    fn resume_rejects_mismatched_config() {
        let a = train_loop(&config(5), TrainRun::default()).unwrap();
        let mut cfg = config(10);
        cfg.family = FamilySpec::Gaussian;
        let r = train_loop(
            &cfg,
            TrainRun {
                resume: Some(a.checkpoint),
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn divergence_aborts_with_diagnostics() {
        let mut cfg = config(50);
        cfg.lr = 1e300;
        cfg.family = FamilySpec::Gaussian;
        match train_loop(&cfg, TrainRun::default()) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("t = [")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn early_stop_on_plateau() {
        let mut cfg = config(5000);
        cfg.lr = 1e-12;
        cfg.early_stop = true;
        cfg.batch_size = 4;
        cfg.model.hidden = vec![4];
        let out = train_loop(&cfg, TrainRun::default()).unwrap();
        assert!(out.stopped_early);
        assert!(out.losses.len() >= 1000 && out.losses.len() < 5000);
    }
}
