//! The `gdiff` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
//! 3 verification failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::forward::ResidualMode;
use crate::model::{load_checkpoint, Checkpoint};
use crate::noise::{FamilySpec, NoiseProcess, PhiMode, PhiSchedule};
use crate::reverse::{sample, timestep_subsequence, SamplerConfig, SamplerKind};
use crate::rng::{domain, stream};
use crate::schedule::{NoiseSchedule, ScheduleSpec};
use crate::stats::{fitting_error_curve, CurveSpec, FitFamily};
use crate::tensor::Tensor;
use crate::train::{self, load_config, Dataset, DatasetSpec, IdxImages, TrainRun};
use crate::verify::{run_suite, Report, Suite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gdiff", version, about = "Diffusion with Gaussian, mixture and Gamma noise")]
pub struct Cli {
    /// Cap the worker pool at N threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Zero wall-clock fields so repeated runs write identical bytes.
    #[arg(long, global = true)]
    reproducible: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a noise predictor from a JSON config.
    Train(TrainArgs),
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Histogram-fitting error of forward-chain residuals.
    Fitcurve(FitcurveArgs),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Print schedule tables or checkpoint metadata.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the checkpoint, metrics and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a checkpoint written by an earlier run of the same config.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Clip {
    Auto,
    On,
    Off,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "ddim")]
    kind: KindArg,
    /// Number of evenly spaced timesteps; defaults to T.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV for point data, PGM grid for images.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines trajectory output.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    record_every: usize,
    /// Clip x0 predictions to [-1, 1]; auto clips images only.
    #[arg(long, value_enum, default_value = "auto")]
    clip_x0: Clip,
    /// Schedule JSON that must match the checkpoint's schedule hash.
    #[arg(long)]
    schedule: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Ddpm,
    Ddim,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// lemma1, lemma2, closed_form_ks, variance_budget, gradcheck, oracle_sampler or all.
    #[arg(long)]
    suite: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Mixture,
    Gamma,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PhiModeArg {
    ByTimestep,
    ByNoiseLevel,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    ClosedForm,
    Iterated,
}

#[derive(Debug, Args)]
struct FitcurveArgs {
    /// Full curve spec as JSON; the flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gamma")]
    family: FamilyArg,
    #[arg(long, default_value_t = 0.001)]
    theta0: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, value_enum, default_value = "by-timestep")]
    phi_mode: PhiModeArg,
    #[arg(long, default_value_t = 1.0)]
    phi_start: f64,
    #[arg(long, default_value_t = 0.5)]
    phi_end: f64,
    /// Schedule JSON; defaults to linear(1000, 1e-4, 0.02).
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 20, 50, 100])]
    t: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec!["gaussian".to_string(), "mixture".to_string(), "gamma".to_string()])]
    fit: Vec<String>,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    #[arg(long, default_value_t = 4000)]
    bins: usize,
    #[arg(long, default_value_t = 10)]
    draws: usize,
    #[arg(long, default_value_t = 100_000)]
    elements: usize,
    #[arg(long, value_enum, default_value = "closed-form")]
    mode: ModeArg,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV with columns t,family,fit_mse,std.
    #[arg(long)]
    out: PathBuf,
    /// Per-repeat results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Write samples as CSV (points) or a PGM grid (images).
    Generate(DatasetArgs),
    /// Write image samples as an IDX file.
    Export(DatasetArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Dataset JSON (inline or a file path) or a bare kind such as ring8.
    #[arg(long)]
    spec: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Schedule JSON file.
    #[arg(long, conflicts_with_all = ["config", "checkpoint"])]
    schedule: Option<PathBuf>,
    /// Noise family JSON (inline or file) to add its parameters to the table.
    #[arg(long)]
    family: Option<String>,
    /// Training config; prints its schedule and family table.
    #[arg(long, conflicts_with = "checkpoint")]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) | Error::TimestepOutOfRange { .. } | Error::Json(_) => {
                EXIT_USAGE
            }
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_USAGE;
        }
        // a pool already built by an earlier call in this process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let ctx = Context {
        reproducible: cli.reproducible,
        command,
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Sample(a) => cmd_sample(&ctx, a),
        Command::Verify(a) => cmd_verify(a),
        Command::Fitcurve(a) => cmd_fitcurve(&ctx, a),
        Command::Dataset(d) => cmd_dataset(d),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

struct Context {
    reproducible: bool,
    command: Vec<String>,
}

impl Context {
    fn now(&self) -> f64 {
        if self.reproducible {
            0.0
        } else {
            SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
        }
    }
}

/// `--seed`, then the config's seed, then `GDIFF_SEED`.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("GDIFF_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("GDIFF_SEED must be an unsigned integer, got '{v}'"))),
        Err(_) => Err(CliError::usage("no seed: pass --seed or set GDIFF_SEED")),
    }
}

fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Inline JSON, a path to a JSON file, or a bare `kind`/`family` name.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str, tag: &str) -> CliResult<T> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else if Path::new(arg).is_file() {
        read_text(Path::new(arg))?
    } else {
        serde_json::json!({ tag: arg }).to_string()
    };
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{arg}: {e}")))
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: Vec<String>,
    version: &'static str,
    config_hash: Option<String>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
    started_at: f64,
    finished_at: Option<f64>,
    status: &'static str,
    exit_code: Option<i32>,
    details: serde_json::Value,
}

impl RunManifest {
    fn start(ctx: &Context, path: &Path, config_hash: Option<String>, seed: Option<u64>, outputs: Vec<PathBuf>) -> CliResult<Self> {
        let m = Self {
            command: ctx.command.clone(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash,
            seed,
            outputs,
            started_at: ctx.now(),
            finished_at: None,
            status: "running",
            exit_code: None,
            details: serde_json::Value::Null,
        };
        m.write(path)?;
        Ok(m)
    }

    fn write(&self, path: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(Error::from)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    fn finish(mut self, ctx: &Context, path: &Path, result: &CliResult<i32>, details: serde_json::Value) -> CliResult<()> {
        self.finished_at = Some(ctx.now());
        let code = match result {
            Ok(c) => *c,
            Err(e) => e.code,
        };
        self.status = if code == EXIT_OK { "ok" } else { "failed" };
        self.exit_code = Some(code);
        self.details = details;
        self.write(path)
    }
}

fn cmd_train(ctx: &Context, a: TrainArgs) -> CliResult<i32> {
    let mut cfg = load_config(&a.config).map_err(|e| match e {
        Error::Io { .. } => CliError::usage(e.to_string()),
        e => e.into(),
    })?;
    cfg.seed = Some(resolve_seed(a.seed, cfg.seed)?);
    cfg.validate()?;
    let resume = match &a.resume {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let canonical = serde_json::to_vec(&cfg).map_err(Error::from)?;
    let manifest_path = a.out.join("manifest.json");
    let outputs = vec![a.out.join(train::CHECKPOINT_FILE), a.out.join(train::METRICS_FILE)];
    let manifest = RunManifest::start(ctx, &manifest_path, Some(short_hash(&canonical)), cfg.seed, outputs)?;

    let mut checks = Vec::new();
    let schedule = cfg.schedule.build()?;
    let process = NoiseProcess::new(cfg.family.clone(), schedule.clone())?;
    if let Some(g) = process.gamma() {
        let t = schedule.len();
        let rel = (g.k_bar(t) * g.theta(t).powi(2) / schedule.one_minus_alpha_bar(t) - 1.0).abs();
        checks.push(serde_json::json!({
            "check": "kbar_T*theta_T^2 = 1-alpha_bar_T",
            "statistic": rel,
            "threshold": 1e-10,
            "pass": rel <= 1e-10,
        }));
    }
    let outcome = train::train_loop(
        &cfg,
        TrainRun {
            out_dir: Some(a.out.clone()),
            resume,
            reproducible: ctx.reproducible,
            stop_at: None,
        },
    );
    let (result, details) = match &outcome {
        Ok(o) => (
            Ok(EXIT_OK),
            serde_json::json!({
                "checks": checks,
                "final_step": o.checkpoint.step,
                "final_loss": o.losses.last(),
                "stopped_early": o.stopped_early,
                "schedule_hash": schedule.hash(),
            }),
        ),
        Err(e) => (
            Err(CliError {
                code: EXIT_RUNTIME,
                message: e.to_string(),
            }),
            serde_json::json!({ "checks": checks, "error": e.to_string() }),
        ),
    };
    manifest.finish(ctx, &manifest_path, &result, details)?;
    if let Ok(o) = &outcome {
        eprintln!(
            "trained {} steps, final loss {:.6}",
            o.checkpoint.step,
            o.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    result
}

fn format_csv(x: &Tensor) -> String {
    let d = x.row_len();
    let mut out = (0..d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..x.rows() {
        let row: Vec<String> = x.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Binary PGM with the images laid out on a square-ish grid.
fn format_pgm(x: &Tensor) -> Vec<u8> {
    let (h, w) = match x.shape() {
        [_, h, w] => (*h, *w),
        [_, w] => (1, *w),
        _ => (1, x.row_len()),
    };
    let n = x.rows();
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols);
    let (width, height) = (cols * w, rows * h);
    let mut pixels = vec![0u8; width * height];
    for i in 0..n {
        let (gr, gc) = (i / cols, i % cols);
        for (j, v) in x.row(i).iter().enumerate() {
            let (r, c) = (j / w, j % w);
            pixels[(gr * h + r) * width + gc * w + c] = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
        }
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

fn write_samples(path: &Path, x: &Tensor) -> CliResult<()> {
    if x.shape().len() > 2 {
        write_atomic(path, &format_pgm(x))
    } else {
        write_atomic(path, format_csv(x).as_bytes())
    }
}

fn cmd_sample(ctx: &Context, a: SampleArgs) -> CliResult<i32> {
    let seed = resolve_seed(a.seed, None)?;
    let ck: Checkpoint = load_checkpoint(&a.checkpoint)?;
    if let Some(p) = &a.schedule {
        let spec: ScheduleSpec = json_arg(&p.to_string_lossy(), "type")?;
        let s = spec.build()?;
        if s.hash() != ck.schedule.hash() {
            return Err(CliError::usage(format!(
                "schedule hash {} does not match checkpoint schedule {}",
                s.hash(),
                ck.schedule.hash()
            )));
        }
    }
    let len = ck.schedule.len();
    let kind = match a.kind {
        KindArg::Ddpm => SamplerKind::Ddpm,
        KindArg::Ddim => SamplerKind::Ddim,
    };
    let steps = timestep_subsequence(len, a.steps.unwrap_or(len))?;
    let image = ck.model.architecture().data_shape.len() > 1;
    let cfg = SamplerConfig {
        kind,
        eta: a.eta,
        steps,
        clip_x0: match a.clip_x0 {
            Clip::Auto => image,
            Clip::On => true,
            Clip::Off => false,
        },
        record_every: a.record_every,
    };
    cfg.validate(len)?;
    let mut manifest_path = a.out.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    let manifest_path = PathBuf::from(manifest_path);
    let mut outputs = vec![a.out.clone()];
    outputs.extend(a.trajectory.clone());
    let ck_bytes = std::fs::read(&a.checkpoint).map_err(|e| Error::io(&a.checkpoint, e))?;
    let manifest = RunManifest::start(ctx, &manifest_path, Some(short_hash(&ck_bytes)), Some(seed), outputs)?;

    let process = NoiseProcess::new(ck.family.clone(), ck.schedule.clone())?;
    let result = (|| -> CliResult<i32> {
        let traj = sample(&ck.model, &process, &cfg, a.n, &mut stream(seed, domain::SAMPLE, 0))?;
        write_samples(&a.out, &traj.x0)?;
        if let Some(p) = &a.trajectory {
            write_atomic(p, traj.to_jsonl().as_bytes())?;
        }
        Ok(EXIT_OK)
    })();
    let details = serde_json::json!({
        "sampler": cfg,
        "timesteps": cfg.steps,
        "n": a.n,
        "schedule_hash": ck.schedule.hash(),
        "family": ck.family,
    });
    manifest.finish(ctx, &manifest_path, &result, details)?;
    result
}

fn cmd_verify(a: VerifyArgs) -> CliResult<i32> {
    let suites: Vec<Suite> = if a.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::parse(&a.suite)?]
    };
    // suites are fixed experiments, so a missing seed means 0
    let seed = resolve_seed(a.seed, None).or_else(|e| match std::env::var("GDIFF_SEED") {
        Ok(_) => Err(e),
        Err(_) => Ok(0),
    })?;
    let reports: Vec<Report> = suites
        .iter()
        .map(|s| run_suite(*s, a.n, seed))
        .collect::<Result<_, _>>()?;
    for r in &reports {
        let failed = r.checks.iter().filter(|c| !c.pass).count();
        eprintln!(
            "{}: {} ({} checks, {failed} failed)",
            r.suite.name(),
            if r.pass { "PASS" } else { "FAIL" },
            r.checks.len()
        );
    }
    let value = if reports.len() == 1 {
        serde_json::to_value(&reports[0])
    } else {
        serde_json::to_value(&reports)
    }
    .map_err(Error::from)?;
    let mut text = serde_json::to_string_pretty(&value).map_err(Error::from)?;
    text.push('\n');
    match &a.report {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(if reports.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_VERIFY })
}

fn curve_spec(a: &FitcurveArgs) -> CliResult<CurveSpec> {
    if let Some(p) = &a.config {
        let mut spec: CurveSpec =
            serde_json::from_str(&read_text(p)?).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
        if let Some(s) = a.seed {
            spec.seed = s;
        }
        return Ok(spec);
    }
    let family = match a.family {
        FamilyArg::Gaussian => FamilySpec::Gaussian,
        FamilyArg::Gamma => FamilySpec::Gamma { theta0: a.theta0 },
        FamilyArg::Mixture => FamilySpec::Mixture {
            p: a.p,
            phi_schedule: PhiSchedule {
                mode: match a.phi_mode {
                    PhiModeArg::ByTimestep => PhiMode::ByTimestep,
                    PhiModeArg::ByNoiseLevel => PhiMode::ByNoiseLevel,
                },
                start: a.phi_start,
                end: a.phi_end,
            },
        },
    };
    let schedule = match &a.schedule {
        Some(p) => json_arg(&p.to_string_lossy(), "type")?,
        None => ScheduleSpec::Linear {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            beta: None,
        },
    };
    Ok(CurveSpec {
        family,
        schedule,
        t_list: a.t.clone(),
        fit_families: a.fit.iter().map(|f| FitFamily::parse(f)).collect::<Result<_, _>>()?,
        repeats: a.repeats,
        bins: a.bins,
        draws: a.draws,
        elements: a.elements,
        mode: match a.mode {
            ModeArg::ClosedForm => ResidualMode::ClosedForm,
            ModeArg::Iterated => ResidualMode::Iterated,
        },
        seed: resolve_seed(a.seed, None)?,
    })
}

fn cmd_fitcurve(ctx: &Context, a: FitcurveArgs) -> CliResult<i32> {
    let spec = curve_spec(&a)?;
    let mut manifest_path = a.out.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    let manifest_path = PathBuf::from(manifest_path);
    let canonical = serde_json::to_vec(&spec).map_err(Error::from)?;
    let mut outputs = vec![a.out.clone()];
    outputs.extend(a.json.clone());
    let manifest = RunManifest::start(ctx, &manifest_path, Some(short_hash(&canonical)), Some(spec.seed), outputs)?;
    let result = (|| -> CliResult<(i32, serde_json::Value)> {
        let curve = fitting_error_curve(&spec)?;
        write_atomic(&a.out, curve.to_csv().as_bytes())?;
        if let Some(p) = &a.json {
            let mut text = serde_json::to_string_pretty(&curve).map_err(Error::from)?;
            text.push('\n');
            write_atomic(p, text.as_bytes())?;
        }
        let mut summary = Vec::new();
        if spec.fit_families.contains(&FitFamily::Gamma) && spec.fit_families.contains(&FitFamily::Gaussian) {
            for &t in &spec.t_list {
                let win = curve.win_fraction(t, FitFamily::Gamma, FitFamily::Gaussian);
                let ratio = curve.mean_ratio(t, FitFamily::Gaussian, FitFamily::Gamma);
                eprintln!(
                    "t={t}: gamma <= gaussian in {:.0}% of repeats, gaussian/gamma mse ratio {:.3}",
                    100.0 * win.unwrap_or(f64::NAN),
                    ratio.unwrap_or(f64::NAN)
                );
                summary.push(serde_json::json!({ "t": t, "gamma_win_fraction": win, "gaussian_over_gamma": ratio }));
            }
        }
        Ok((EXIT_OK, serde_json::json!({ "summary": summary })))
    })();
    let (code, details) = match result {
        Ok((c, d)) => (Ok(c), d),
        Err(e) => (Err(e), serde_json::Value::Null),
    };
    manifest.finish(ctx, &manifest_path, &code, details)?;
    code
}

fn cmd_dataset(d: DatasetCommand) -> CliResult<i32> {
    let (export, a) = match d {
        DatasetCommand::Generate(a) => (false, a),
        DatasetCommand::Export(a) => (true, a),
    };
    let spec: DatasetSpec = json_arg(&a.spec, "kind")?;
    let seed = resolve_seed(a.seed, None)?;
    let ds = Dataset::new(spec)?;
    let x = ds.sample(a.n, &mut stream(seed, domain::DATA, 0));
    if export {
        if !ds.spec().is_image() {
            return Err(CliError::usage(format!("{} is not an image dataset; use generate", ds.spec().name())));
        }
        let mut dims = vec![a.n];
        dims.extend(ds.data_shape());
        let pixels = x.data().iter().map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8).collect();
        let bytes = IdxImages { dims, pixels }.to_bytes();
        write_atomic(&a.out, &bytes)?;
    } else {
        write_samples(&a.out, &x)?;
    }
    Ok(EXIT_OK)
}

fn schedule_table(s: &NoiseSchedule, family: Option<&FamilySpec>) -> CliResult<String> {
    let process = family.map(|f| NoiseProcess::new(f.clone(), s.clone())).transpose()?;
    let mut out = String::from("t,beta,alpha,alpha_bar,one_minus_alpha_bar,sigma");
    match family {
        Some(FamilySpec::Mixture { .. }) => out.push_str(",phi,m1,m2"),
        Some(FamilySpec::Gamma { .. }) => out.push_str(",theta,k,k_bar"),
        _ => {}
    }
    out.push('\n');
    for t in 1..=s.len() {
        let _ = write!(
            out,
            "{t},{:e},{:e},{:e},{:e},{:e}",
            s.beta(t),
            s.alpha(t),
            s.alpha_bar(t),
            s.one_minus_alpha_bar(t),
            s.sigma(t)
        );
        if let Some(p) = &process {
            if let Some(m) = p.mixture(t) {
                let _ = write!(out, ",{:e},{:e},{:e}", m.phi, m.m1, m.m2);
            }
            if let Some(g) = p.gamma() {
                let _ = write!(out, ",{:e},{:e},{:e}", g.theta(t), g.k(t), g.k_bar(t));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

fn cmd_inspect(a: InspectArgs) -> CliResult<i32> {
    if let Some(p) = &a.checkpoint {
        let ck = load_checkpoint(p)?;
        let info = serde_json::json!({
            "architecture": ck.model.architecture(),
            "n_params": ck.model.params().len(),
            "family": ck.family,
            "schedule": ck.schedule.spec(),
            "schedule_hash": ck.schedule.hash(),
            "step": ck.step,
            "has_optimizer_state": ck.adam.is_some(),
        });
        println!("{}", serde_json::to_string_pretty(&info).map_err(Error::from)?);
        return Ok(EXIT_OK);
    }
    let (schedule, family) = if let Some(p) = &a.config {
        let cfg = load_config(p)?;
        (cfg.schedule.build()?, Some(cfg.family))
    } else if let Some(p) = &a.schedule {
        let spec: ScheduleSpec = json_arg(&p.to_string_lossy(), "type")?;
        let family = a.family.as_deref().map(|f| json_arg::<FamilySpec>(f, "family")).transpose()?;
        (spec.build()?, family)
    } else {
        return Err(CliError::usage("inspect needs --schedule, --config or --checkpoint"));
    };
    print!("{}", schedule_table(&schedule, family.as_ref())?);
    Ok(EXIT_OK)
}
