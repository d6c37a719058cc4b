use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn tiny_config(kind: &str) -> Value {
    let (system, graph, d_horizon) = match kind {
        "pendulum" => (json!({"kind": "pendulum"}), json!({"topology": "FULL", "n": 2}), 1.0),
        _ => (
            json!({"kind": "kuramoto"}),
            json!({"topology": "BA", "n": 5, "m": 2, "seed": 3}),
            1.0,
        ),
    };
    json!({
        "name": kind,
        "system": system,
        "graph": graph,
        "dataset": {"n_traj": 10, "horizon": d_horizon, "dt": 0.1, "split": 0.7, "seed": 1},
        "model": {"message_dim": 3, "hidden": [8], "seed": 0},
        "train": {"lr": 0.003, "batch_size": 4, "epochs": 2, "horizon": 6, "seed": 0},
        "message_sizes": [1, 2],
        "analysis": {"pca_components": 2}
    })
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn config(&self, name: &str, v: &Value) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_mpnode"))
            .args(args)
            .current_dir(self.dir.path())
            .env("MPNODE_THREADS", "1")
            .output()
            .unwrap()
    }
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn no_partials(dir: &Path) {
    for entry in fs::read_dir(dir).unwrap() {
        let name = entry.unwrap().file_name().to_string_lossy().into_owned();
        assert!(!name.contains(".partial-"), "leftover scratch dir {name}");
    }
}

#[test]
fn full_pipeline() {
    let w = Work::new();
    w.config("p.json", &tiny_config("pendulum"));
    ok(&w.run(&["generate", "--config", "p.json", "--out", "data"]));
    for f in [
        "train/manifest.json",
        "train/data.bin",
        "val/adjacency.bin",
        "config.json",
    ] {
        assert!(w.path("data").join(f).exists(), "{f}");
    }
    ok(&w.run(&["train", "--config", "p.json", "--data", "data", "--out", "run"]));
    for f in ["checkpoint.mpck", "metrics.csv", "report.json", "config.json"] {
        assert!(w.path("run").join(f).exists(), "{f}");
    }
    let cfg: Value = serde_json::from_str(&fs::read_to_string(w.path("run/config.json")).unwrap()).unwrap();
    assert_eq!(cfg["invocation"]["command"], "train");
    assert_eq!(cfg["resolved_system"]["kind"], "pendulum");
    assert_eq!(cfg["train"]["epochs"], 2);

    ok(&w.run(&[
        "eval",
        "--config",
        "p.json",
        "--from",
        "run/checkpoint.mpck",
        "--data",
        "data",
        "--out",
        "eval",
    ]));
    let report: Value = serde_json::from_str(&fs::read_to_string(w.path("eval/report.json")).unwrap()).unwrap();
    assert!(report["mean"].as_f64().unwrap().is_finite());
    ok(&w.run(&[
        "eval",
        "--config",
        "p.json",
        "--from",
        "run/checkpoint.mpck",
        "--data",
        "data",
        "--out",
        "eval_c",
        "--clamp-messages",
    ]));
    let clamped: Value = serde_json::from_str(&fs::read_to_string(w.path("eval_c/report.json")).unwrap()).unwrap();
    assert_eq!(clamped["fingerprint"]["clamp_messages"], true);

    ok(&w.run(&[
        "finetune",
        "--config",
        "p.json",
        "--from",
        "run/checkpoint.mpck",
        "--data",
        "data",
        "--out",
        "ft",
    ]));
    ok(&w.run(&[
        "pca",
        "--config",
        "p.json",
        "--from",
        "run/checkpoint.mpck",
        "--data",
        "data",
        "--out",
        "pca",
    ]));
    assert!(w.path("pca/pca.json").exists() && w.path("pca/pca.svg").exists());
    ok(&w.run(&[
        "plot",
        "--config",
        "p.json",
        "--from",
        "run/checkpoint.mpck",
        "--data",
        "data",
        "--out",
        "plot",
    ]));
    assert!(w.path("plot/rollout.svg").exists() && w.path("plot/message_norms.svg").exists());
    ok(&w.run(&["plot", "--config", "p.json", "--data", "run", "--out", "lossplot"]));
    assert!(w.path("lossplot/loss.svg").exists() && w.path("lossplot/loss.csv").exists());
    ok(&w.run(&["ablate", "--config", "p.json", "--data", "data", "--out", "ablate"]));
    for f in [
        "messages/checkpoint.mpck",
        "clamped/metrics.csv",
        "ablation.svg",
        "summary.json",
    ] {
        assert!(w.path("ablate").join(f).exists(), "{f}");
    }
    ok(&w.run(&[
        "sweep",
        "--config",
        "p.json",
        "--data",
        "data",
        "--out",
        "sweep",
        "--message-sizes",
        "1,4",
    ]));
    assert!(w.path("sweep/p1/checkpoint.mpck").exists() && w.path("sweep/p4/metrics.csv").exists());
    assert!(!w.path("sweep/p2").exists());
    for d in ["eval", "ft", "pca", "plot", "lossplot", "ablate", "sweep"] {
        assert!(w.path(d).join("config.json").exists(), "{d}");
    }
    no_partials(w.dir.path());
}

#[test]
fn default_output_dir_and_printed_path() {
    let w = Work::new();
    w.config("p.json", &tiny_config("pendulum"));
    let o = w.run(&["generate", "--config", "p.json"]);
    ok(&o);
    assert!(w.path("runs/pendulum/generate/train/manifest.json").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("runs/pendulum/generate"));
}

fn without_wall(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn reruns_are_bit_identical() {
    let w = Work::new();
    w.config("k.json", &tiny_config("kuramoto"));
    ok(&w.run(&["generate", "--config", "k.json", "--out", "d1"]));
    ok(&w.run(&["generate", "--config", "k.json", "--out", "d2"]));
    assert_eq!(
        fs::read(w.path("d1/train/data.bin")).unwrap(),
        fs::read(w.path("d2/train/data.bin")).unwrap()
    );
    ok(&w.run(&["train", "--config", "k.json", "--out", "r1"]));
    ok(&w.run(&["train", "--config", "k.json", "--out", "r2"]));
    assert_eq!(
        fs::read(w.path("r1/checkpoint.mpck")).unwrap(),
        fs::read(w.path("r2/checkpoint.mpck")).unwrap()
    );
    assert_eq!(
        fs::read(w.path("r1/report.json")).unwrap(),
        fs::read(w.path("r2/report.json")).unwrap()
    );
    let a = fs::read_to_string(w.path("r1/metrics.csv")).unwrap();
    let b = fs::read_to_string(w.path("r2/metrics.csv")).unwrap();
    assert_eq!(without_wall(&a), without_wall(&b));

    ok(&w.run(&["train", "--config", "k.json", "--out", "r3", "--seed", "5"]));
    assert_ne!(
        fs::read(w.path("r1/checkpoint.mpck")).unwrap(),
        fs::read(w.path("r3/checkpoint.mpck")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let w = Work::new();
    fs::write(w.path("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&w.run(&["train", "--config", "bad.json", "--out", "x"])), 2);
    let mut v = tiny_config("pendulum");
    v["train"]["lr"] = json!(-1.0);
    w.config("neg.json", &v);
    assert_eq!(code(&w.run(&["train", "--config", "neg.json", "--out", "x"])), 2);
    let mut v = tiny_config("pendulum");
    v["train"]["bogus_field"] = json!(1);
    w.config("unknown.json", &v);
    assert_eq!(code(&w.run(&["train", "--config", "unknown.json", "--out", "x"])), 2);
    assert_eq!(code(&w.run(&["train", "--config", "missing.json", "--out", "x"])), 2);
    w.config("p.json", &tiny_config("pendulum"));
    assert_eq!(code(&w.run(&["eval", "--config", "p.json", "--out", "x"])), 2);
    assert!(!w.path("x").exists());
    no_partials(w.dir.path());
}

#[test]
fn incompatible_checkpoint_exits_3() {
    let w = Work::new();
    w.config("k.json", &tiny_config("kuramoto"));
    w.config("p.json", &tiny_config("pendulum"));
    ok(&w.run(&["train", "--config", "k.json", "--out", "k"]));
    for cmd in ["finetune", "eval"] {
        let o = w.run(&[cmd, "--config", "p.json", "--from", "k/checkpoint.mpck", "--out", "bad"]);
        assert_eq!(code(&o), 3, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!w.path("bad").exists());
    }
    no_partials(w.dir.path());
}

#[test]
fn divergence_exits_4_and_cleans_up() {
    let w = Work::new();
    w.config("p.json", &tiny_config("pendulum"));
    ok(&w.run(&["generate", "--config", "p.json", "--out", "data"]));
    let bin = w.path("data/train/data.bin");
    let mut bytes = fs::read(&bin).unwrap();
    bytes[80..88].copy_from_slice(&f64::NAN.to_le_bytes());
    fs::write(&bin, bytes).unwrap();
    let o = w.run(&["train", "--config", "p.json", "--data", "data", "--out", "run"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!w.path("run").exists());
    no_partials(w.dir.path());
}

#[test]
fn bad_thread_env_is_a_config_error() {
    let w = Work::new();
    w.config("p.json", &tiny_config("pendulum"));
    let o = Command::new(env!("CARGO_BIN_EXE_mpnode"))
        .args(["generate", "--config", "p.json", "--out", "d"])
        .current_dir(w.dir.path())
        .env("MPNODE_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_mpnode"))
        .args(["generate", "--config", "p.json", "--out", "d"])
        .current_dir(w.dir.path())
        .env("MPNODE_THREADS", "0")
        .output()
        .unwrap();
    ok(&o);
}
