#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_gdiff");

pub const RING_SCHEDULE: &str = r#"{"type":"linear","T":100,"beta_start":0.001,"beta_end":0.2}"#;
pub const GAMMA: &str = r#"{"family":"gamma","theta0":0.001}"#;
pub const MIXTURE: &str = r#"{"family":"mixture","p":0.5,"phi_schedule":{"mode":"by_timestep","start":1.0,"end":0.5}}"#;
pub const GAUSSIAN: &str = r#"{"family":"gaussian"}"#;

pub fn gdiff(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("GDIFF_SEED")
        .output()
        .expect("gdiff binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn small_config(family: &str, steps: u64) -> String {
    format!(
        r#"{{"version":1,"seed":3,"family":{family},"schedule":{{"type":"linear","T":20,"beta_start":0.001,"beta_end":0.3}},
  "dataset":{{"kind":"ring8"}},"model":{{"hidden":[16,16]}},"batch_size":32,"steps":{steps},"lr":0.001,
  "checkpoint_every":10,"log_every":5}}"#
    )
}

/// Runs every subcommand twice with identical arguments and compares every
/// output file and stdout byte for byte.
pub fn cli_determinism(dir: &Path) -> Result<usize, String> {
    let config = dir.join("train.json");
    std::fs::write(&config, small_config(GAMMA, 30)).map_err(|e| e.to_string())?;
    let run = dir.join("run");
    let ck = run.join("checkpoint.gdnm");
    let schedule = dir.join("schedule.json");
    std::fs::write(&schedule, r#"{"type":"linear","T":20,"beta_start":0.001,"beta_end":0.3}"#)
        .map_err(|e| e.to_string())?;
    let p = |name: &str| dir.join(name);

    let cases: Vec<(Vec<String>, Vec<PathBuf>)> = vec![
        (
            args(&["--reproducible", "train", "--config", path_str(&config), "--out", path_str(&run)]),
            vec![ck.clone(), run.join("metrics.jsonl"), run.join("manifest.json")],
        ),
        (
            args(&[
                "--reproducible", "sample", "--checkpoint", path_str(&ck), "--kind", "ddpm", "--n", "64",
                "--seed", "5", "--out", path_str(&p("ddpm.csv")), "--trajectory", path_str(&p("traj.jsonl")),
                "--record-every", "5",
            ]),
            vec![p("ddpm.csv"), p("traj.jsonl"), p("ddpm.csv.manifest.json")],
        ),
        (
            args(&[
                "--reproducible", "sample", "--checkpoint", path_str(&ck), "--kind", "ddim", "--steps", "7",
                "--eta", "0.5", "--n", "64", "--seed", "5", "--out", path_str(&p("ddim.csv")),
            ]),
            vec![p("ddim.csv"), p("ddim.csv.manifest.json")],
        ),
        (
            args(&["verify", "--suite", "lemma1", "--seed", "2", "--report", path_str(&p("v.json"))]),
            vec![p("v.json")],
        ),
        (
            args(&[
                "--reproducible", "fitcurve", "--t", "1,5", "--repeats", "2", "--bins", "50", "--draws", "1",
                "--elements", "2000", "--seed", "4", "--out", path_str(&p("curve.csv")), "--json",
                path_str(&p("curve.json")),
            ]),
            vec![p("curve.csv"), p("curve.json"), p("curve.csv.manifest.json")],
        ),
        (
            args(&["dataset", "generate", "--spec", "swiss_roll", "--n", "100", "--seed", "1", "--out", path_str(&p("d.csv"))]),
            vec![p("d.csv")],
        ),
        (
            args(&["dataset", "export", "--spec", "glyphs8x8", "--n", "10", "--seed", "1", "--out", path_str(&p("g.idx"))]),
            vec![p("g.idx")],
        ),
        (args(&["inspect", "--schedule", path_str(&schedule), "--family", GAMMA]), vec![]),
        (args(&["inspect", "--checkpoint", path_str(&ck)]), vec![]),
    ];

    for (argv, files) in &cases {
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let mut snapshots = Vec::new();
        for _ in 0..2 {
            let out = gdiff(&argv);
            if !out.status.success() {
                return Err(format!("{argv:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
            }
            let mut bytes = vec![out.stdout];
            for f in files {
                bytes.push(std::fs::read(f).map_err(|e| format!("{}: {e}", f.display()))?);
            }
            snapshots.push(bytes);
        }
        if snapshots[0] != snapshots[1] {
            return Err(format!("{argv:?} is not byte-identical across runs"));
        }
    }
    Ok(cases.len())
}

fn args(a: &[&str]) -> Vec<String> {
    a.iter().map(|s| s.to_string()).collect()
}
