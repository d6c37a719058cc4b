//! Losses, Adam, and the training / finetuning loop.
//!
//! Gradients come from backpropagating through the unrolled RK4 steps of each
//! rollout. Every trajectory in a batch gets its own tape, so per-trajectory
//! passes run in parallel; the gradient merge and the optimizer step are serial
//! and in trajectory order, which keeps runs bit-reproducible for any thread count.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::{Tape, Tensor, Var};
use crate::analysis;
use crate::datasets::TrajectorySet;
use crate::error::{Error, Result};
use crate::model::{rollout_taped, Checkpoint, MpNodeModel, Source, TapedNet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    HuberTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub huber_delta: f64,
    /// Snapshots per training window; `None` rolls out the whole trajectory.
    pub horizon: Option<usize>,
    pub clamp_messages: bool,
    pub seed: u64,
    /// Validation / test evaluation interval in epochs.
    pub eval_every: usize,
    /// Rescale the batch gradient to at most this global norm. Off by default.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 128,
            epochs: 100,
            loss: LossKind::Mse,
            huber_delta: 1.0,
            horizon: None,
            clamp_messages: false,
            seed: 0,
            eval_every: 1,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.huber_delta > 0.0) {
            return Err(Error::Config(format!(
                "huber_delta must be > 0, got {}",
                self.huber_delta
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if self.horizon.is_some_and(|h| h < 2) {
            return Err(Error::Config("horizon must cover at least 2 snapshots".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip_norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

/// Mean squared error over every element of `pred` (a flat taped vector).
pub fn mse_loss(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    let r = residual(tape, "mse_loss", pred, target)?;
    let sq = tape.square(r);
    let s = tape.sum(sq);
    Ok(tape.scale(s, 1.0 / target.len() as f64))
}

/// Huber penalty of each timestep residual, averaged over time and then over
/// nodes and dimensions. All series share one length, so this is the mean over
/// all elements.
pub fn huber_time_loss(tape: &mut Tape, pred: Var, target: &[f64], delta: f64) -> Result<Var> {
    let r = residual(tape, "huber_time_loss", pred, target)?;
    let h = tape.huber(r, delta)?;
    let s = tape.sum(h);
    Ok(tape.scale(s, 1.0 / target.len() as f64))
}

fn residual(tape: &mut Tape, op: &'static str, pred: Var, target: &[f64]) -> Result<Var> {
    let n = tape.dims(pred).len();
    if n != target.len() || n == 0 {
        return Err(Error::dim(
            op,
            format!("prediction has {n} elements, target {}", target.len()),
        ));
    }
    let t = tape.constant_vector(target);
    tape.sub(pred, t)
}

fn loss_on(tape: &mut Tape, cfg: &TrainConfig, pred: Var, target: &[f64]) -> Result<Var> {
    match cfg.loss {
        LossKind::Mse => mse_loss(tape, pred, target),
        LossKind::HuberTime => huber_time_loss(tape, pred, target, cfg.huber_delta),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[&Tensor]) -> Self {
        AdamState {
            m: shapes.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
            v: shapes.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_model(model: &MpNodeModel) -> Self {
        AdamState::new(&model.params())
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], st: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != st.m.len() {
        return Err(Error::dim(
            "adam_step",
            format!("{} params, {} grads, {} moments", params.len(), grads.len(), st.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != st.m[i].shape() {
            return Err(Error::dim(
                "adam_step",
                format!("tensor {i}: {:?} vs {:?}", p.shape(), g.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient in parameter tensor {i}"
            )));
        }
    }
    st.step += 1;
    let t = st.step as i32;
    let c1 = 1.0 - st.beta1.powi(t);
    let c2 = 1.0 - st.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = st.m[i].data_mut();
        let v = st.v[i].data_mut();
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = st.beta1 * *m + (1.0 - st.beta1) * g;
            *v = st.beta2 * *v + (1.0 - st.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *w -= lr * mhat / (vhat.sqrt() + st.eps);
        }
    }
    Ok(())
}

/// A training window: `len` snapshots of trajectory `traj` starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub traj: usize,
    pub start: usize,
    pub len: usize,
}

/// Cut every trajectory into consecutive windows of `cfg.horizon` snapshots
/// (adjacent windows share their boundary snapshot). Without a horizon each
/// trajectory is one window. A trailing partial window is dropped.
pub fn segments(set: &TrajectorySet, cfg: &TrainConfig) -> Vec<Segment> {
    let t = set.len_time();
    let h = cfg.horizon.map_or(t, |h| h.min(t));
    let mut out = Vec::new();
    for traj in 0..set.n_traj() {
        let mut start = 0;
        while start + h <= t {
            out.push(Segment { traj, start, len: h });
            if h == t {
                break;
            }
            start += h - 1;
        }
    }
    out
}

/// Roll a segment out on `tape` from its first observed state and return its loss node.
fn segment_loss(tape: &mut Tape, net: &TapedNet, set: &TrajectorySet, seg: Segment, cfg: &TrainConfig) -> Result<Var> {
    let (n, d, c) = (set.n_nodes(), set.state_dim(), set.control_dim());
    let traj = set.trajectory(seg.traj);
    let window = &traj[seg.start * n * d..(seg.start + seg.len) * n * d];
    let x0 = Tensor::new(vec![n, d], window[..n * d].to_vec())?;
    let controls = if c > 0 {
        let u = &set.controls_of(seg.traj)[seg.start * n * c..(seg.start + seg.len) * n * c];
        Some(Tensor::new(vec![seg.len, n, c], u.to_vec())?)
    } else {
        None
    };
    let r = rollout_taped(
        tape,
        net,
        set.graph_of(seg.traj),
        Source::Values(&x0),
        controls.as_ref(),
        seg.len,
        set.dt,
        cfg.clamp_messages,
    )?;
    let flat: Vec<Var> = r.states.iter().flatten().copied().collect();
    let pred = tape.concat(&flat)?;
    loss_on(tape, cfg, pred, window)
}

fn context(seg: Segment) -> String {
    format!("trajectory {} (from snapshot {})", seg.traj, seg.start)
}

/// Loss value and parameter gradients of one segment.
pub fn segment_gradient(
    model: &MpNodeModel,
    set: &TrajectorySet,
    seg: Segment,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    per_segment(&mut tape, model, set, seg, cfg)
}

fn per_segment(
    tape: &mut Tape,
    model: &MpNodeModel,
    set: &TrajectorySet,
    seg: Segment,
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Tensor>)> {
    tape.clear();
    let net = model.register(tape);
    let loss = segment_loss(tape, &net, set, seg, cfg).map_err(|e| e.with_context(context(seg)))?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(Error::Divergence(format!("{}: non-finite loss", context(seg))));
    }
    let grads = tape.backward(loss)?;
    Ok((value, net.gradients(&grads)))
}

/// Mean loss and mean gradient over a batch, merged serially in batch order.
pub fn batch_gradient(
    model: &MpNodeModel,
    set: &TrajectorySet,
    batch: &[Segment],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidParam("empty batch".into()));
    }
    let results: Vec<Result<(f64, Vec<Tensor>)>> = batch
        .par_iter()
        .map_init(Tape::new, |tape, &seg| per_segment(tape, model, set, seg, cfg))
        .collect();
    let mut total = 0.0;
    let mut acc: Vec<Tensor> = model
        .params()
        .iter()
        .map(|t| Tensor::zeros(t.shape().to_vec()))
        .collect();
    for r in results {
        let (l, g) = r?;
        total += l;
        for (a, g) in acc.iter_mut().zip(&g) {
            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
    }
    let k = batch.len() as f64;
    for a in &mut acc {
        a.data_mut().iter_mut().for_each(|x| *x /= k);
    }
    Ok((total / k, acc))
}

/// Mean loss over all segments of a set, without gradients.
pub fn dataset_loss(model: &MpNodeModel, set: &TrajectorySet, cfg: &TrainConfig) -> Result<f64> {
    let segs = segments(set, cfg);
    if segs.is_empty() {
        return Err(Error::InvalidParam("no segments to evaluate".into()));
    }
    let results: Vec<Result<f64>> = segs
        .par_iter()
        .map_init(Tape::new, |tape, &seg| {
            tape.clear();
            let net = model.register_frozen(tape);
            let l = segment_loss(tape, &net, set, seg, cfg).map_err(|e| e.with_context(context(seg)))?;
            Ok(tape.scalar(l))
        })
        .collect();
    let mut total = 0.0;
    for r in results {
        total += r?;
    }
    Ok(total / segs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub test_error: Option<f64>,
    pub wall_seconds: f64,
}

/// Per-epoch metrics of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EpochRecord>,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,test_error,wall_seconds";

impl RunRecord {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }

    /// `(epoch, test_error)` for every epoch that has one.
    pub fn test_errors(&self) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.test_error.map(|e| (r.epoch, e)))
            .collect()
    }

    pub fn best_test_error(&self) -> Option<f64> {
        self.test_errors().into_iter().map(|(_, e)| e).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                opt(r.val_loss),
                opt(r.test_error),
                r.wall_seconds
            ));
        }
        s
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(METRICS_HEADER) {
            return Err(Error::format(origin, format!("expected header '{METRICS_HEADER}'")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::format(origin, format!("bad number '{s}': {e}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::format(origin, format!("row {}: expected 5 fields", i + 1)));
            }
            rows.push(EpochRecord {
                epoch: f[0]
                    .parse()
                    .map_err(|e| Error::format(origin, format!("bad epoch '{}': {e}", f[0])))?,
                train_loss: num(f[1])?,
                val_loss: opt(f[2])?,
                test_error: opt(f[3])?,
                wall_seconds: num(f[4])?,
            });
        }
        Ok(RunRecord { rows })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunRecord::parse_csv(&text, path)
    }
}

/// Result of a training run. If `halted` is set, training stopped early and
/// `checkpoint` holds the best parameters seen before the failure.
#[derive(Debug)]
pub struct TrainOutcome {
    /// Best-validation parameters (last epoch's when there is no validation set).
    pub checkpoint: Checkpoint,
    /// Parameters after the final completed epoch.
    pub last: MpNodeModel,
    pub record: RunRecord,
    pub halted: Option<Error>,
}

impl TrainOutcome {
    /// Turn an early halt into an error.
    pub fn into_result(self) -> Result<TrainOutcome> {
        match self.halted {
            Some(e) => Err(e),
            None => Ok(self),
        }
    }
}

/// Train from the given initial parameters.
///
/// All sets must share the training set's normalization. `test` is evaluated
/// on the same schedule as `val` and fills the `test_error` column (mean
/// per-trajectory MSE in physical units).
pub fn train(
    model: MpNodeModel,
    train_set: &TrajectorySet,
    val_set: Option<&TrajectorySet>,
    test_set: Option<&TrajectorySet>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    run(model, train_set, val_set, test_set, cfg, None)
}

/// Continue training a checkpoint on a new (already normalized) dataset.
///
/// The output checkpoint carries the new training normalization, with the
/// checkpoint's original statistics kept as `source_norm`.
pub fn finetune(
    ckpt: &Checkpoint,
    train_set: &TrajectorySet,
    val_set: Option<&TrajectorySet>,
    test_set: Option<&TrajectorySet>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    ckpt.check_compatible(train_set.state_dim(), train_set.control_dim())?;
    let source = ckpt.source_norm.clone().or_else(|| ckpt.norm.clone());
    run(ckpt.model.clone(), train_set, val_set, test_set, cfg, source)
}

fn run(
    model: MpNodeModel,
    train_set: &TrajectorySet,
    val_set: Option<&TrajectorySet>,
    test_set: Option<&TrajectorySet>,
    cfg: &TrainConfig,
    source_norm: Option<crate::datasets::NormStats>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mcfg = model.config().clone();
    for set in std::iter::once(train_set).chain(val_set).chain(test_set) {
        if set.state_dim() != mcfg.state_dim || set.control_dim() != mcfg.control_dim {
            return Err(Error::Compatibility(format!(
                "model has d={}, c={}; dataset has d={}, c={}",
                mcfg.state_dim,
                mcfg.control_dim,
                set.state_dim(),
                set.control_dim()
            )));
        }
    }

    let norm = train_set.norm.clone();
    let make_ckpt = |m: &MpNodeModel, epoch: usize, val: Option<f64>| {
        let mut ck = Checkpoint::new(m.clone(), norm.clone());
        ck.source_norm = source_norm.clone();
        ck.provenance = serde_json::json!({
            "dataset": train_set.fingerprint(),
            "epoch": epoch,
            "val_loss": val,
            "clamp_messages": cfg.clamp_messages,
            "seed": cfg.seed,
        });
        ck
    };

    let mut model = model;
    let mut adam = AdamState::for_model(&model);
    let mut record = RunRecord::default();
    let mut best: Option<(f64, Checkpoint)> = None;
    let start = Instant::now();
    let all = segments(train_set, cfg);
    if all.is_empty() {
        return Err(Error::InvalidParam(
            "training horizon longer than the trajectories".into(),
        ));
    }
    let mut order = all.clone();

    for epoch in 1..=cfg.epochs {
        let mut r = rng::substream(cfg.seed, epoch as u64);
        order.copy_from_slice(&all);
        order.shuffle(&mut r);
        let mut sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let step = batch_gradient(&model, train_set, batch, cfg).and_then(|(loss, mut grads)| {
                if let Some(c) = cfg.clip_norm {
                    clip(&mut grads, c);
                }
                adam_step(&mut model.params_mut(), &grads, &mut adam, cfg.lr)?;
                Ok(loss)
            });
            match step {
                Ok(loss) => sum += loss * batch.len() as f64,
                Err(e) => {
                    let e = e.with_context(format!("epoch {epoch}, batch {b}"));
                    let fallback = make_ckpt(&model, epoch - 1, None);
                    return Ok(halt(model, record, best, fallback, e));
                }
            }
        }
        let train_loss = sum / all.len() as f64;
        let evaluate_now = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let mut val_loss = None;
        let mut test_error = None;
        if evaluate_now {
            if let Some(v) = val_set {
                match dataset_loss(&model, v, cfg) {
                    Ok(l) => val_loss = Some(l),
                    Err(e) => {
                        let e = e.with_context(format!("epoch {epoch}, validation"));
                        let fallback = make_ckpt(&model, epoch - 1, None);
                        return Ok(halt(model, record, best, fallback, e));
                    }
                }
            }
            if let Some(t) = test_set {
                test_error = Some(analysis::mean_test_error(&model, norm.as_ref(), t, cfg.clamp_messages));
            }
        }
        if !train_loss.is_finite() {
            let e = Error::Divergence(format!("epoch {epoch}: non-finite training loss"));
            let fallback = make_ckpt(&model, epoch - 1, None);
            return Ok(halt(model, record, best, fallback, e));
        }
        record.rows.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            test_error,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if let Some(v) = val_loss.filter(|v| v.is_finite()) {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, make_ckpt(&model, epoch, Some(v))));
            }
        }
    }
    let last_epoch = record.rows.len();
    let checkpoint = match best {
        Some((_, ck)) => ck,
        None => make_ckpt(&model, last_epoch, None),
    };
    Ok(TrainOutcome {
        checkpoint,
        last: model,
        record,
        halted: None,
    })
}

fn halt(
    model: MpNodeModel,
    record: RunRecord,
    best: Option<(f64, Checkpoint)>,
    fallback: Checkpoint,
    e: Error,
) -> TrainOutcome {
    let checkpoint = best.map_or(fallback, |(_, ck)| ck);
    TrainOutcome {
        checkpoint,
        last: model,
        record,
        halted: Some(e),
    }
}

fn clip(grads: &mut [Tensor], max_norm: f64) {
    let norm = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}
