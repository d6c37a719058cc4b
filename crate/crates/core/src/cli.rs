//! The `mpnode` command line: experiment configs and the command implementations.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{self, Series};
use crate::datasets::{self, generate_dataset, kuramoto_frequencies, split_train_val, TrajectorySet};
use crate::dynamics::{SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::graphs::{self, GraphSpec, Topology};
use crate::model::{load_checkpoint, save_checkpoint, Activation, ModelConfig, MpNodeModel};
use crate::rng;
use crate::training::{self, LossKind, RunRecord, TrainConfig, TrainOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPATIBILITY: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub kind: SystemKind,
    /// Overrides of the default parameters for `kind`. For gene and kuramoto,
    /// `b` may be a single number (applied to every node); kuramoto also takes
    /// `frequency_seed` to draw `b ~ U[-1, 1]`.
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphBlock {
    pub topology: Topology,
    pub n: usize,
    /// Target mean degree for ER/BA/WS; exact degree for EXPLICIT graphs.
    pub degree: Option<usize>,
    pub p: Option<f64>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub beta: Option<f64>,
    /// FULL only: weights `U[0,1] × magnitude`. Without it FULL is binary.
    pub magnitude: Option<f64>,
    /// EXPLICIT only: a row-major adjacency matrix.
    pub adjacency: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Number of distinct adjacencies; trajectories cycle through them.
    #[serde(default = "one")]
    pub count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    pub n_traj: usize,
    /// Seconds.
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_split() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub message_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            message_dim: 7,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisBlock {
    pub pca_components: usize,
    /// Test trajectory shown by `plot`.
    pub plot_trajectory: usize,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        AnalysisBlock {
            pca_components: 3,
            plot_trajectory: 0,
        }
    }
}

/// One experiment, as stored in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub system: SystemBlock,
    pub graph: GraphBlock,
    pub dataset: DatasetBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub message_sizes: Vec<usize>,
    #[serde(default)]
    pub analysis: AnalysisBlock,
}

impl ExperimentConfig {
    /// Parse and validate. A missing `train.loss` follows the system's recipe.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::Config(format!("{}: {e}", origin.display()));
        let raw: Value = serde_json::from_str(text).map_err(bad)?;
        let has_loss = raw.get("train").and_then(|t| t.get("loss")).is_some();
        let mut cfg: ExperimentConfig = serde_json::from_value(raw).map_err(bad)?;
        if !has_loss {
            cfg.train.loss = ExperimentConfig::default_loss(cfg.system.kind);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.graph.n == 0 {
            return Err(Error::Config("graph.n must be >= 1".into()));
        }
        if self.graph.count == 0 {
            return Err(Error::Config("graph.count must be >= 1".into()));
        }
        if self.dataset.n_traj == 0 {
            return Err(Error::Config("dataset.n_traj must be >= 1".into()));
        }
        if !(self.dataset.split > 0.0 && self.dataset.split < 1.0) {
            return Err(Error::Config(format!(
                "dataset.split must be in (0, 1), got {}",
                self.dataset.split
            )));
        }
        Ok(())
    }

    /// The system with defaults filled in and overrides applied.
    pub fn system_spec(&self) -> Result<SystemSpec> {
        let n = self.graph.n;
        let mut params = self.system.params.clone();
        let base = match self.system.kind {
            SystemKind::Pendulum => SystemSpec::Pendulum(Default::default()),
            SystemKind::Lorenz => SystemSpec::Lorenz(Default::default()),
            SystemKind::Gene => SystemSpec::Gene(crate::dynamics::GeneParams::standard(n)),
            SystemKind::Kuramoto => {
                let seed = match params.remove("frequency_seed") {
                    Some(v) => v
                        .as_u64()
                        .ok_or_else(|| Error::Config("frequency_seed must be an integer".into()))?,
                    None => self.dataset.seed,
                };
                SystemSpec::Kuramoto(crate::dynamics::KuramotoParams {
                    b: kuramoto_frequencies(n, seed),
                })
            }
        };
        if let Some(b) = params.get("b").and_then(Value::as_f64) {
            params.insert("b".into(), json!(vec![b; n]));
        }
        let mut v = serde_json::to_value(&base).expect("system serializes");
        let obj = v.as_object_mut().expect("tagged enum is an object");
        for (k, val) in params {
            if k == "kind" || !obj.contains_key(&k) {
                return Err(Error::Config(format!(
                    "unknown {} parameter '{k}'",
                    self.system.kind.name()
                )));
            }
            obj.insert(k, val);
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("system params: {e}")))
    }

    /// The `count` coupling graphs, graph `i` seeded from `(graph.seed, i)`.
    pub fn graphs(&self) -> Result<Vec<GraphSpec>> {
        let g = &self.graph;
        (0..g.count)
            .map(|i| {
                let seed = rng::child_seed(g.seed, i as u64);
                let need_degree = || {
                    g.degree
                        .ok_or_else(|| Error::Config(format!("{} graph needs a degree", g.topology.tag())))
                };
                match g.topology {
                    Topology::ErdosRenyi => match g.p {
                        Some(p) => graphs::gen_erdos_renyi(g.n, p, seed),
                        None => graphs::gen_family_with_degree(g.topology, g.n, need_degree()?, 0.0, seed),
                    },
                    Topology::BarabasiAlbert => match g.m {
                        Some(m) => graphs::gen_barabasi_albert(g.n, m, seed),
                        None => graphs::gen_family_with_degree(g.topology, g.n, need_degree()?, 0.0, seed),
                    },
                    Topology::WattsStrogatz => {
                        let beta = g.beta.unwrap_or(graphs::DEFAULT_WS_BETA);
                        match g.k {
                            Some(k) => graphs::gen_watts_strogatz(g.n, k, beta, seed),
                            None => graphs::gen_family_with_degree(g.topology, g.n, need_degree()?, beta, seed),
                        }
                    }
                    Topology::Full => match g.magnitude {
                        Some(mag) => graphs::gen_fully_connected_weighted(g.n, mag, seed),
                        None => Ok(GraphSpec::complete(g.n)),
                    },
                    Topology::Explicit => match (&g.adjacency, g.degree) {
                        (Some(a), _) => GraphSpec::explicit(g.n, a.clone()),
                        (None, Some(d)) => graphs::gen_fixed_degree(g.n, d, seed),
                        (None, None) => Err(Error::Config("EXPLICIT graph needs an adjacency or a degree".into())),
                    },
                }
                .map_err(|e| match e {
                    Error::InvalidParam(m) => Error::Config(format!("graph: {m}")),
                    e => e,
                })
            })
            .collect()
    }

    /// Simulate the full dataset (unnormalized).
    pub fn generate(&self) -> Result<TrajectorySet> {
        let sys = self.system_spec()?;
        let graphs = self.graphs()?;
        let d = &self.dataset;
        generate_dataset(&sys, &graphs, d.n_traj, d.horizon, d.dt, d.seed).map_err(|e| match e {
            Error::InvalidParam(m) => Error::Config(m),
            e => e,
        })
    }

    /// Simulate, split and normalize with training statistics.
    pub fn generate_split(&self) -> Result<(TrajectorySet, TrajectorySet)> {
        let ts = self.generate()?;
        split_train_val(&ts, self.dataset.split, rng::child_seed(self.dataset.seed, u64::MAX))
    }

    pub fn model_config(&self, state_dim: usize) -> ModelConfig {
        ModelConfig {
            state_dim,
            message_dim: self.model.message_dim,
            control_dim: 0,
            hidden: self.model.hidden.clone(),
            activation: self.model.activation,
        }
    }

    pub fn fresh_model(&self, state_dim: usize) -> MpNodeModel {
        MpNodeModel::new(self.model_config(state_dim), self.model.seed)
    }

    /// The loss the system's recipe calls for.
    pub fn default_loss(kind: SystemKind) -> LossKind {
        match kind {
            SystemKind::Pendulum | SystemKind::Gene => LossKind::Mse,
            SystemKind::Lorenz | SystemKind::Kuramoto => LossKind::HuberTime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Generate,
    Train,
    Finetune,
    Eval,
    Ablate,
    Sweep,
    Pca,
    Plot,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Train => "train",
            Command::Finetune => "finetune",
            Command::Eval => "eval",
            Command::Ablate => "ablate",
            Command::Sweep => "sweep",
            Command::Pca => "pca",
            Command::Plot => "plot",
        }
    }
}

/// Message-passing neural ODE experiments.
#[derive(Debug, Parser)]
#[command(name = "mpnode", version)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset directory (as written by `generate`), or a run directory for `plot`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint to start from or evaluate.
    #[arg(long = "from")]
    pub from: Option<PathBuf>,
    /// Output directory [default: runs/<config name>/<command>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the dataset seed for `generate`, the training and model seeds otherwise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Zero every message (sets `train.clamp_messages`)
    #[arg(long)]
    pub clamp_messages: bool,
    /// Comma-separated message sizes for `sweep`.
    #[arg(long, value_delimiter = ',')]
    pub message_sizes: Option<Vec<usize>>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Compatibility(_) | Error::Dimension { .. } => EXIT_COMPATIBILITY,
        Error::Divergence(_) | Error::Domain(_) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    match run(&args) {
        Ok(out) => {
            println!("{}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("MPNODE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("MPNODE_THREADS must be a non-negative integer, got '{v}'")))?;
    if n > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Run one command; returns the output directory.
pub fn run(args: &Args) -> Result<PathBuf> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        if args.command == Command::Generate {
            cfg.dataset.seed = s;
        } else {
            cfg.train.seed = s;
            cfg.model.seed = s;
        }
    }
    if args.clamp_messages {
        cfg.train.clamp_messages = true;
    }
    if let Some(sizes) = &args.message_sizes {
        cfg.message_sizes = sizes.clone();
    }
    let out = args.out.clone().unwrap_or_else(|| {
        let stem = if cfg.name.is_empty() {
            args.config
                .file_stem()
                .map_or("run".into(), |s| s.to_string_lossy().into_owned())
        } else {
            cfg.name.clone()
        };
        PathBuf::from("runs").join(stem).join(args.command.name())
    });
    let staging = Staging::new(&out)?;
    let result = dispatch(args, &cfg, staging.path()).and_then(|extra| {
        write_resolved_config(staging.path(), args, &cfg, extra)?;
        staging.commit()
    });
    result.map(|_| out)
}

fn write_resolved_config(dir: &Path, args: &Args, cfg: &ExperimentConfig, extra: Value) -> Result<()> {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    let obj = v.as_object_mut().expect("object");
    if let Ok(sys) = cfg.system_spec() {
        obj.insert(
            "resolved_system".into(),
            serde_json::to_value(sys).expect("system serializes"),
        );
    }
    obj.insert(
        "invocation".into(),
        json!({
            "command": args.command.name(),
            "data": args.data,
            "from": args.from,
            "clamp_messages": cfg.train.clamp_messages,
            "details": extra,
        }),
    );
    write_json(&dir.join("config.json"), &v)
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes go to a sibling scratch directory that is merged into the real
/// output only on success and deleted otherwise.
struct Staging {
    target: PathBuf,
    scratch: PathBuf,
    committed: bool,
}

impl Staging {
    fn new(target: &Path) -> Result<Self> {
        let name = target
            .file_name()
            .map_or("out".into(), |n| n.to_string_lossy().into_owned());
        let parent = target
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let scratch = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
        }
        fs::create_dir_all(&scratch).map_err(|e| Error::io(&scratch, e))?;
        Ok(Staging {
            target: target.to_path_buf(),
            scratch,
            committed: false,
        })
    }

    fn path(&self) -> &Path {
        &self.scratch
    }

    fn commit(mut self) -> Result<()> {
        if !self.target.exists() {
            fs::rename(&self.scratch, &self.target).map_err(|e| Error::io(&self.target, e))?;
        } else {
            let entries = fs::read_dir(&self.scratch).map_err(|e| Error::io(&self.scratch, e))?;
            for entry in entries {
                let entry = entry.map_err(|e| Error::io(&self.scratch, e))?;
                let dest = self.target.join(entry.file_name());
                if dest.is_dir() {
                    fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
                } else if dest.exists() {
                    fs::remove_file(&dest).map_err(|e| Error::io(&dest, e))?;
                }
                fs::rename(entry.path(), &dest).map_err(|e| Error::io(&dest, e))?;
            }
            let _ = fs::remove_dir_all(&self.scratch);
        }
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.scratch);
        }
    }
}

fn dispatch(args: &Args, cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    match args.command {
        Command::Generate => cmd_generate(cfg, out),
        Command::Train => cmd_train(cfg, args.data.as_deref(), out),
        Command::Finetune => cmd_finetune(cfg, need(&args.from, "--from")?, args.data.as_deref(), out),
        Command::Eval => cmd_eval(cfg, need(&args.from, "--from")?, args.data.as_deref(), out),
        Command::Ablate => cmd_ablate(cfg, args.data.as_deref(), out),
        Command::Sweep => cmd_sweep(cfg, args.data.as_deref(), out),
        Command::Pca => cmd_pca(cfg, need(&args.from, "--from")?, args.data.as_deref(), out),
        Command::Plot => cmd_plot(cfg, args.from.as_deref(), args.data.as_deref(), out),
    }
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("this command requires {flag}")))
}

/// Training and validation splits: from `--data` if given, else simulated from the config.
fn load_splits(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<(TrajectorySet, TrajectorySet)> {
    match data {
        Some(dir) => Ok((load(&dir.join("train"))?, load(&dir.join("val"))?)),
        None => cfg.generate_split(),
    }
}

fn load(dir: &Path) -> Result<TrajectorySet> {
    if !dir.join("manifest.json").exists() {
        return Err(Error::Config(format!("no dataset at {}", dir.display())));
    }
    datasets::load_dataset(dir)
}

/// A single evaluation set: `DIR` itself if it holds a dataset, else `DIR/test`, else `DIR/val`.
fn load_eval_set(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<TrajectorySet> {
    match data {
        Some(dir) if dir.join("manifest.json").exists() => load(dir),
        Some(dir) if dir.join("test").join("manifest.json").exists() => load(&dir.join("test")),
        Some(dir) => load(&dir.join("val")),
        None => Ok(cfg.generate_split()?.1),
    }
}

fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Value> {
    let (train, val) = cfg.generate_split()?;
    datasets::save_dataset(&train, out.join("train"))?;
    datasets::save_dataset(&val, out.join("val"))?;
    Ok(json!({
        "train_trajectories": train.n_traj(),
        "val_trajectories": val.n_traj(),
        "snapshots": train.len_time(),
        "train_fingerprint": train.fingerprint(),
    }))
}

fn save_run(out: &Path, outcome: &TrainOutcome) -> Result<()> {
    save_checkpoint(&outcome.checkpoint, out.join("checkpoint.mpck"))?;
    outcome.record.write_csv(out.join("metrics.csv"))
}

fn summary(record: &RunRecord) -> Value {
    json!({
        "epochs": record.rows.len(),
        "final_train_loss": record.final_train_loss(),
        "best_test_error": record.best_test_error(),
    })
}

fn cmd_train(cfg: &ExperimentConfig, data: Option<&Path>, out: &Path) -> Result<Value> {
    let (train, val) = load_splits(cfg, data)?;
    let model = cfg.fresh_model(train.state_dim());
    let outcome = training::train(model, &train, Some(&val), Some(&val), &cfg.train)?.into_result()?;
    save_run(out, &outcome)?;
    let report = analysis::evaluate(&outcome.checkpoint, &val, cfg.train.clamp_messages)?;
    report.write_json(out.join("report.json"))?;
    Ok(summary(&outcome.record))
}

fn cmd_finetune(cfg: &ExperimentConfig, from: &Path, data: Option<&Path>, out: &Path) -> Result<Value> {
    let ckpt = load_checkpoint(from)?;
    ckpt.check_compatible(cfg.system_spec()?.state_dim(), 0)?;
    let (train, val) = load_splits(cfg, data)?;
    let outcome = training::finetune(&ckpt, &train, Some(&val), Some(&val), &cfg.train)?.into_result()?;
    save_run(out, &outcome)?;
    let report = analysis::evaluate(&outcome.checkpoint, &val, cfg.train.clamp_messages)?;
    report.write_json(out.join("report.json"))?;
    let mut s = summary(&outcome.record);
    s["source_checkpoint"] = json!(ckpt.fingerprint());
    Ok(s)
}

fn cmd_eval(cfg: &ExperimentConfig, from: &Path, data: Option<&Path>, out: &Path) -> Result<Value> {
    let ckpt = load_checkpoint(from)?;
    let test = load_eval_set(cfg, data)?;
    let report = analysis::evaluate(&ckpt, &test, cfg.train.clamp_messages)?;
    report.write_json(out.join("report.json"))?;
    Ok(json!({ "mean": report.mean, "std": report.std, "diverged": report.diverged_count() }))
}

fn cmd_ablate(cfg: &ExperimentConfig, data: Option<&Path>, out: &Path) -> Result<Value> {
    let (train, val) = load_splits(cfg, data)?;
    let mut curves = Vec::new();
    let mut finals = serde_json::Map::new();
    for (label, clamp) in [("messages", false), ("clamped", true)] {
        let tc = TrainConfig {
            clamp_messages: clamp,
            ..cfg.train.clone()
        };
        let model = cfg.fresh_model(train.state_dim());
        let outcome = training::train(model, &train, Some(&val), None, &tc)?.into_result()?;
        let dir = out.join(label);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_run(&dir, &outcome)?;
        curves.push(Series::new(
            label,
            outcome
                .record
                .rows
                .iter()
                .map(|r| (r.epoch as f64, r.train_loss))
                .collect(),
        ));
        finals.insert(label.into(), json!(outcome.record.final_train_loss()));
    }
    analysis::emit_plot(&curves, out.join("ablation.svg"), "training loss: messages vs clamped")?;
    write_json(&out.join("summary.json"), &finals)?;
    Ok(Value::Object(finals))
}

fn cmd_sweep(cfg: &ExperimentConfig, data: Option<&Path>, out: &Path) -> Result<Value> {
    let sizes = if cfg.message_sizes.is_empty() {
        vec![1, 3, 7, 13]
    } else {
        cfg.message_sizes.clone()
    };
    let (train, val) = load_splits(cfg, data)?;
    let mut curves = Vec::new();
    let mut best = serde_json::Map::new();
    for p in sizes {
        let mut c = cfg.clone();
        c.model.message_dim = p;
        let model = c.fresh_model(train.state_dim());
        let outcome = training::train(model, &train, Some(&val), Some(&val), &cfg.train)?.into_result()?;
        let dir = out.join(format!("p{p}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        save_run(&dir, &outcome)?;
        curves.push(Series::new(
            format!("p={p}"),
            outcome
                .record
                .test_errors()
                .into_iter()
                .map(|(e, v)| (e as f64, v))
                .collect(),
        ));
        best.insert(format!("p{p}"), json!(outcome.record.best_test_error()));
    }
    analysis::emit_plot(&curves, out.join("sweep.svg"), "test error by message size")?;
    write_json(&out.join("summary.json"), &best)?;
    Ok(Value::Object(best))
}

fn cmd_pca(cfg: &ExperimentConfig, from: &Path, data: Option<&Path>, out: &Path) -> Result<Value> {
    let ckpt = load_checkpoint(from)?;
    let set = load_eval_set(cfg, data)?;
    ckpt.check_compatible(set.state_dim(), set.control_dim())?;
    let log = analysis::collect_messages(&ckpt, &set, cfg.train.clamp_messages)?;
    let dim = log.shape()[2] * log.shape()[3];
    let k = cfg.analysis.pca_components.min(dim);
    let pca = analysis::pca_messages(&log, k)?;
    write_json(&out.join("pca.json"), &pca)?;
    let (t, kk) = (log.shape()[1], pca.projections.shape()[2]);
    let traj = cfg.analysis.plot_trajectory.min(set.n_traj() - 1);
    let series: Vec<Series> = (0..kk)
        .map(|c| {
            let pts = (0..t)
                .map(|s| (s as f64 * set.dt, pca.projections.data()[(traj * t + s) * kk + c]))
                .collect();
            Series::new(format!("PC{}", c + 1), pts)
        })
        .collect();
    analysis::emit_plot(&series, out.join("pca.svg"), "message principal components")?;
    Ok(json!({ "explained": pca.explained }))
}

fn cmd_plot(cfg: &ExperimentConfig, from: Option<&Path>, data: Option<&Path>, out: &Path) -> Result<Value> {
    match from {
        None => {
            let dir = data.ok_or_else(|| Error::Config("plot needs --from CKPT or --data RUN_DIR".into()))?;
            let rec = RunRecord::read_csv(dir.join("metrics.csv"))?;
            let mut series = vec![Series::new(
                "train_loss",
                rec.rows.iter().map(|r| (r.epoch as f64, r.train_loss)).collect(),
            )];
            let val: Vec<(f64, f64)> = rec
                .rows
                .iter()
                .filter_map(|r| r.val_loss.map(|v| (r.epoch as f64, v)))
                .collect();
            if !val.is_empty() {
                series.push(Series::new("val_loss", val));
            }
            analysis::emit_plot(&series, out.join("loss.svg"), "loss curves")?;
            Ok(json!({ "rows": rec.rows.len() }))
        }
        Some(ck) => {
            let ckpt = load_checkpoint(ck)?;
            let set = load_eval_set(cfg, data)?;
            ckpt.check_compatible(set.state_dim(), set.control_dim())?;
            let i = cfg.analysis.plot_trajectory.min(set.n_traj() - 1);
            let (t, n, d) = (set.len_time(), set.n_nodes(), set.state_dim());
            let (_, pred) =
                analysis::predict_trajectory(&ckpt.model, ckpt.norm.as_ref(), &set, i, cfg.train.clamp_messages)?;
            let truth = set.physical_trajectory(i);
            let time = |s: usize| s as f64 * set.dt;
            let mut series = Vec::new();
            for k in 0..n.min(4) {
                series.push(Series::new(
                    format!("node {k} true"),
                    (0..t).map(|s| (time(s), truth[(s * n + k) * d])).collect(),
                ));
                series.push(Series::new(
                    format!("node {k} pred"),
                    (0..t).map(|s| (time(s), pred[(s * n + k) * d])).collect(),
                ));
            }
            analysis::emit_plot(
                &series,
                out.join("rollout.svg"),
                "first state component: prediction vs ground truth",
            )?;
            if ckpt.model.config().message_dim > 0 {
                let single = set.subset(&[i])?;
                let norms =
                    analysis::message_norms(&analysis::collect_messages(&ckpt, &single, cfg.train.clamp_messages)?)?;
                let ms: Vec<Series> = (0..n.min(4))
                    .map(|k| {
                        Series::new(
                            format!("node {k} |m|"),
                            (0..t).map(|s| (time(s), norms.data()[s * n + k])).collect(),
                        )
                    })
                    .collect();
                analysis::emit_plot(&ms, out.join("message_norms.svg"), "outgoing message norm")?;
            }
            Ok(json!({ "trajectory": i }))
        }
    }
}
