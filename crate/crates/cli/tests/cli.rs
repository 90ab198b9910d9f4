use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
seed = 7
deterministic = true

[model]
patch_len = 4
d_model = 8
n_blocks = 1
n_heads = 2
d_ff = 16
max_context = 32
max_output_patches = 2

[generate]
n_tasks = 12
context = 24
horizon = 8

[train]
checkpoint_every = 5
log_every = 0

[train.curriculum]
stage1 = { context = 16, steps = 6, max_output_patches = 1 }
stage2 = { context = 32, steps = 4, max_output_patches = 2 }
min_context = 8
batch_tasks = 4
"#;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_patchcast"))
            .current_dir(self.dir.path())
            .env_remove("PATCHCAST_CONFIG")
            .arg("--config")
            .arg("run.toml")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn read(&self, rel: &str) -> Vec<u8> {
        std::fs::read(self.path(rel)).unwrap()
    }
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn generate_is_reproducible_and_sized() {
    let s = Sandbox::new(TINY);
    s.ok(&["generate", "--output", "a"]);
    s.ok(&["generate", "--output", "b"]);
    for f in ["dataset.jsonl", "truth.jsonl", "manifest.json", "metadata.json"] {
        assert!(s.read(&format!("a/{f}")) == s.read(&format!("b/{f}")), "{f} differs");
    }
    assert_eq!(lines(&s.path("a/dataset.jsonl")), 12);
    s.ok(&["generate", "--output", "c", "--n-tasks", "100"]);
    assert_eq!(lines(&s.path("c/dataset.jsonl")), 100);
    s.ok(&["generate", "--output", "d", "--seed", "8"]);
    assert_ne!(s.read("a/dataset.jsonl"), s.read("d/dataset.jsonl"));
}

#[test]
fn config_errors_exit_with_two() {
    let s = Sandbox::new(&format!("{TINY}\n[pool]\nmax_variatez = 3\n"));
    let out = s.run(&["generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_variatez"));

    let s = Sandbox::new(TINY);
    assert_eq!(s.run(&["generate", "--bogus"]).status.code(), Some(2));
    assert_eq!(s.run(&["generate", "--n-tasks", "0"]).status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_patchcast"))
        .current_dir(s.dir.path())
        .env("PATCHCAST_CONFIG", "nope.toml")
        .arg("generate")
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn training_is_deterministic_and_resumable() {
    let s = Sandbox::new(TINY);
    s.ok(&["train", "--output", "a"]);
    s.ok(&["train", "--output", "b"]);
    assert_eq!(s.read("a/final.ckpt"), s.read("b/final.ckpt"));
    assert_eq!(s.read("a/loss_log.csv"), s.read("b/loss_log.csv"));
    assert_eq!(lines(&s.path("a/loss_log.csv")), 11);
    assert!(s.path("a/config.toml").exists() && s.path("a/checkpoints/step_000005.ckpt").exists());

    std::fs::remove_file(s.path("b/final.ckpt")).unwrap();
    std::fs::remove_file(s.path("b/checkpoints/step_000010.ckpt")).unwrap();
    let out = s.ok(&["train", "--output", "b", "--resume"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("steps 5..10"));
    assert_eq!(s.read("a/final.ckpt"), s.read("b/final.ckpt"));
    assert_eq!(s.read("a/loss_log.csv"), s.read("b/loss_log.csv"));
}

#[test]
fn training_from_a_fixed_dataset() {
    let s = Sandbox::new(TINY);
    s.ok(&["generate", "--output", "data"]);
    s.ok(&["train", "--output", "run", "--dataset", "data/dataset.jsonl", "--truth", "data/truth.jsonl"]);
    assert!(s.path("run/final.ckpt").exists());
    let out = s.run(&["train", "--output", "run2", "--dataset", "data/dataset.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn forecast_writes_one_line_per_task_and_modes_differ() {
    let s = Sandbox::new(TINY);
    s.ok(&["generate", "--output", "data"]);
    s.ok(&["train", "--output", "run"]);
    let common = ["forecast", "--checkpoint", "run/final.ckpt", "--dataset", "data/dataset.jsonl"];
    s.ok(&[&common[..], &["--mode", "univariate", "--output", "uni.jsonl"]].concat());
    s.ok(&[&common[..], &["--mode", "cross", "--output", "cross.jsonl"]].concat());
    s.ok(&[&common[..], &["--mode", "covariates", "--output", "cov.jsonl", "--workers", "3"]].concat());
    assert_eq!(lines(&s.path("uni.jsonl")), 12);
    assert!(s.path("uni.jsonl.config.toml").exists());

    let manifest: serde_json::Value = serde_json::from_slice(&s.read("data/manifest.json")).unwrap();
    let cov_task = manifest["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["covariates"].as_u64().unwrap() > 0)
        .expect("a covariate task")["task_id"]
        .as_str()
        .unwrap()
        .to_string();
    let find = |file: &str| -> serde_json::Value {
        std::fs::read_to_string(s.path(file))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .find(|v| v["task_id"] == cov_task.as_str())
            .unwrap()
    };
    assert_ne!(find("uni.jsonl")["forecast"], find("cross.jsonl")["forecast"]);
}

#[test]
fn forecast_failures_are_reported_per_task() {
    let s = Sandbox::new(TINY);
    s.ok(&["generate", "--output", "data"]);
    let out = s.run(&["forecast", "--checkpoint", "missing.ckpt", "--dataset", "data/dataset.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint not found"));

    s.ok(&["train", "--output", "run"]);
    let text = std::fs::read_to_string(s.path("data/dataset.jsonl")).unwrap();
    let mut bad: Vec<String> = text.lines().map(String::from).collect();
    let mut first: serde_json::Value = serde_json::from_str(&bad[0]).unwrap();
    first["horizon"] = 64.into();
    bad[0] = first.to_string();
    std::fs::write(s.path("bad.jsonl"), bad.join("\n")).unwrap();
    let out = s.run(&["forecast", "--checkpoint", "run/final.ckpt", "--dataset", "bad.jsonl", "--output", "f.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("task-00000"));
    assert_eq!(lines(&s.path("f.jsonl")), 11);
}

fn summary(s: &Sandbox, dir: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(s.path(&format!("{dir}/summary.csv"))).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn seasonal_naive_against_itself() {
    let s = Sandbox::new(TINY);
    s.ok(&["generate", "--output", "data"]);
    s.ok(&["forecast", "--seasonal-naive", "--dataset", "data/dataset.jsonl", "--output", "sn.jsonl"]);
    s.ok(&["evaluate", "--forecast", "snaive=sn.jsonl", "--output", "eval", "--resamples", "50"]);
    let rows = summary(&s, "eval");
    assert!(!rows.is_empty());
    for r in rows {
        let (win, skill): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert_eq!(win, 50.0, "{r:?}");
        assert_eq!(skill, 0.0, "{r:?}");
    }
}

#[test]
fn evaluate_skips_tasks_without_forecasts() {
    let s = Sandbox::new(TINY);
    s.ok(&["generate", "--output", "data"]);
    s.ok(&["train", "--output", "run"]);
    s.ok(&["forecast", "--checkpoint", "run/final.ckpt", "--dataset", "data/dataset.jsonl", "--output", "f.jsonl"]);
    let text = std::fs::read_to_string(s.path("f.jsonl")).unwrap();
    let kept: Vec<&str> = text.lines().skip(1).collect();
    std::fs::write(s.path("partial.jsonl"), kept.join("\n")).unwrap();
    s.ok(&["evaluate", "--forecast", "model=partial.jsonl", "--output", "eval"]);
    let rows = summary(&s, "eval");
    let wql: Vec<_> = rows.iter().filter(|r| &r[1] == "wql").collect();
    assert_eq!(wql.len(), 2);
    for r in &wql {
        assert_eq!(&r[10], "11");
        assert!(r[11].contains("task-00000 (no forecast from model)"), "{:?}", &r[11]);
    }
    let warnings = std::fs::read_to_string(s.path("eval/warnings.txt")).unwrap();
    assert!(warnings.contains("task task-00000: no forecast from model"));
    assert!(s.path("eval/results.csv").exists() && s.path("eval/config.toml").exists());

    let out = s.run(&["evaluate", "--output", "eval2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoke_config_trains_and_loss_falls() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml");
    let config = std::fs::read_to_string(root).unwrap().replace("smoke/", "");
    let s = Sandbox::new(&config);
    let start = std::time::Instant::now();
    s.ok(&["train"]);
    assert!(start.elapsed().as_secs() < 300, "took {:?}", start.elapsed());
    let log: Vec<f64> = csv::Reader::from_path(s.path("run/loss_log.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[2].parse().unwrap())
        .collect();
    assert_eq!(log.len(), 500);
    let lead = log[..100].iter().sum::<f64>() / 100.0;
    let trail = log[400..].iter().sum::<f64>() / 100.0;
    assert!(trail < lead, "trailing mean {trail} vs leading {lead}");
    s.ok(&["generate"]);
    s.ok(&["forecast"]);
    s.ok(&["evaluate", "--resamples", "100"]);
}
