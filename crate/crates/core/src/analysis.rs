//! Evaluation, summary metrics, message PCA and figure output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::datasets::{NormStats, TrajectorySet};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, MpNodeModel};
use crate::training::RunRecord;

/// Identifies what an evaluation was run on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub dataset: String,
    pub checkpoint: String,
    pub clamp_messages: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Index within the test set of each evaluated (non-diverged) trajectory.
    pub trajectories: Vec<usize>,
    /// Per-trajectory MSE on de-normalized states.
    pub errors: Vec<f64>,
    /// Per-trajectory MSE in the checkpoint's normalized coordinates.
    pub normalized_errors: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub normalized_mean: f64,
    pub normalized_std: f64,
    /// What the ± spread is taken over.
    pub spread: String,
    /// Trajectories whose rollout blew up; excluded from the statistics.
    pub diverged: Vec<usize>,
    pub n_nodes: usize,
    pub topologies: Vec<String>,
    pub fingerprint: Fingerprint,
}

impl EvalReport {
    pub fn diverged_count(&self) -> usize {
        self.diverged.len()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Population mean and standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Roll trajectory `i` of `set` out with `model`, which expects inputs
/// normalized by `norm`. Returns the prediction in normalized and physical units.
pub fn predict_trajectory(
    model: &MpNodeModel,
    norm: Option<&NormStats>,
    set: &TrajectorySet,
    i: usize,
    clamp_messages: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (t, n, d) = (set.len_time(), set.n_nodes(), set.state_dim());
    let mut x0 = set.physical_trajectory(i)[..n * d].to_vec();
    if let Some(s) = norm {
        s.apply_in_place(&mut x0);
    }
    let controls = if set.control_dim() > 0 {
        Some(Tensor::new(vec![t, n, set.control_dim()], set.controls_of(i).to_vec())?)
    } else {
        None
    };
    let r = model.rollout(
        set.graph_of(i),
        &Tensor::new(vec![n, d], x0)?,
        controls.as_ref(),
        t,
        set.dt,
        clamp_messages,
    )?;
    let pred_norm = r.states.into_data();
    let mut pred_phys = pred_norm.clone();
    if let Some(s) = norm {
        s.invert_in_place(&mut pred_phys);
    }
    Ok((pred_norm, pred_phys))
}

/// Physical and normalized MSE of one trajectory.
pub fn trajectory_errors(
    model: &MpNodeModel,
    norm: Option<&NormStats>,
    set: &TrajectorySet,
    i: usize,
    clamp_messages: bool,
) -> Result<(f64, f64)> {
    let (pred_norm, pred_phys) = predict_trajectory(model, norm, set, i, clamp_messages)?;
    let target_phys = set.physical_trajectory(i);
    let mut target_norm = target_phys.clone();
    if let Some(s) = norm {
        s.apply_in_place(&mut target_norm);
    }
    let (p, q) = (mse(&pred_phys, &target_phys), mse(&pred_norm, &target_norm));
    if !p.is_finite() || !q.is_finite() {
        return Err(Error::Divergence(format!("trajectory {i}: non-finite error")));
    }
    Ok((p, q))
}

/// Mean physical MSE over non-diverged trajectories; infinite if all diverge.
pub fn mean_test_error(
    model: &MpNodeModel,
    norm: Option<&NormStats>,
    set: &TrajectorySet,
    clamp_messages: bool,
) -> f64 {
    let errs: Vec<f64> = (0..set.n_traj())
        .into_par_iter()
        .filter_map(|i| trajectory_errors(model, norm, set, i, clamp_messages).ok().map(|e| e.0))
        .collect();
    if errs.is_empty() {
        f64::INFINITY
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    }
}

/// Aggregate per-trajectory scores. `score(i)` returns the physical and
/// normalized MSE of trajectory `i`; divergence or domain errors mark it as diverged.
pub fn evaluate_with<F>(set: &TrajectorySet, fingerprint: Fingerprint, score: F) -> Result<EvalReport>
where
    F: Fn(usize) -> Result<(f64, f64)> + Sync,
{
    let results: Vec<Result<(f64, f64)>> = (0..set.n_traj()).into_par_iter().map(&score).collect();
    let mut report = EvalReport {
        trajectories: Vec::new(),
        errors: Vec::new(),
        normalized_errors: Vec::new(),
        mean: f64::NAN,
        std: f64::NAN,
        normalized_mean: f64::NAN,
        normalized_std: f64::NAN,
        spread: "std across test trajectories".into(),
        diverged: Vec::new(),
        n_nodes: set.n_nodes(),
        topologies: set.graphs.iter().map(|g| g.topology().tag().to_string()).collect(),
        fingerprint,
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((p, q)) => {
                report.trajectories.push(i);
                report.errors.push(p);
                report.normalized_errors.push(q);
            }
            Err(Error::Divergence(_)) | Err(Error::Domain(_)) => report.diverged.push(i),
            Err(e) => return Err(e),
        }
    }
    (report.mean, report.std) = mean_std(&report.errors);
    (report.normalized_mean, report.normalized_std) = mean_std(&report.normalized_errors);
    Ok(report)
}

/// Roll out every test trajectory from its initial state and score it.
///
/// The test set may be normalized with any statistics: targets are compared
/// in physical units and in the checkpoint's normalized coordinates.
pub fn evaluate(ckpt: &Checkpoint, test_set: &TrajectorySet, clamp_messages: bool) -> Result<EvalReport> {
    ckpt.check_compatible(test_set.state_dim(), test_set.control_dim())?;
    let fp = Fingerprint {
        dataset: test_set.fingerprint(),
        checkpoint: ckpt.fingerprint(),
        clamp_messages,
    };
    let norm = ckpt.norm.as_ref();
    evaluate_with(test_set, fp, |i| {
        trajectory_errors(&ckpt.model, norm, test_set, i, clamp_messages)
    })
}

/// `(1-based epoch of the minimum test error) × (minimum test error)`, earliest epoch on ties.
pub fn epochs_times_min_error(record: &RunRecord) -> Result<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (epoch, e) in record.test_errors() {
        if best.is_none_or(|(_, b)| e < b) {
            best = Some((epoch, e));
        }
    }
    best.map(|(epoch, e)| epoch as f64 * e)
        .ok_or_else(|| Error::InvalidParam("run record has no test-error entries".into()))
}

/// Outgoing messages of every trajectory: `[traj, T, n, p]`.
pub fn collect_messages(ckpt: &Checkpoint, set: &TrajectorySet, clamp_messages: bool) -> Result<Tensor> {
    let (t, n, d) = (set.len_time(), set.n_nodes(), set.state_dim());
    let p = ckpt.model.config().message_dim;
    let logs: Vec<Result<Vec<f64>>> = (0..set.n_traj())
        .into_par_iter()
        .map(|i| {
            let mut x0 = set.physical_trajectory(i)[..n * d].to_vec();
            if let Some(s) = &ckpt.norm {
                s.apply_in_place(&mut x0);
            }
            let r = ckpt.model.rollout(
                set.graph_of(i),
                &Tensor::new(vec![n, d], x0)?,
                None,
                t,
                set.dt,
                clamp_messages,
            )?;
            Ok(r.messages.into_data())
        })
        .collect();
    let mut data = Vec::with_capacity(set.n_traj() * t * n * p);
    for l in logs {
        data.extend(l?);
    }
    Tensor::new(vec![set.n_traj(), t, n, p], data)
}

/// Euclidean norm of each node's message per timestep: `[traj, T, n]`.
pub fn message_norms(log: &Tensor) -> Result<Tensor> {
    let s = log.shape();
    if s.len() != 4 || s[3] == 0 {
        return Err(Error::dim(
            "message_norms",
            format!("expected [traj, T, n, p>=1], got {s:?}"),
        ));
    }
    let norms = log
        .data()
        .chunks_exact(s[3])
        .map(|m| m.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Tensor::new(s[..3].to_vec(), norms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Unit-norm principal directions, by descending variance.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Share of total variance captured by each returned component.
    pub explained: Vec<f64>,
    pub mean: Vec<f64>,
    /// Projections `[traj, T, k]`.
    pub projections: Tensor,
}

/// PCA over per-timestep concatenations of all node messages.
pub fn pca_messages(log: &Tensor, k: usize) -> Result<PcaResult> {
    let s = log.shape();
    if s.len() != 4 || s[3] == 0 {
        return Err(Error::dim(
            "pca_messages",
            format!("expected [traj, T, n, p>=1], got {s:?}"),
        ));
    }
    let (traj, t, dim) = (s[0], s[1], s[2] * s[3]);
    if k > dim {
        return Err(Error::InvalidParam(format!("k = {k} exceeds message dimension {dim}")));
    }
    let samples = traj * t;
    if samples == 0 {
        return Err(Error::InvalidParam("no message samples".into()));
    }
    let data = log.data();
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= samples as f64);
    let cov = covariance(data, &mean, dim);
    let (vals, vecs) = symmetric_eigen(&cov, dim)?;
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let components: Vec<Vec<f64>> = vecs.into_iter().take(k).collect();
    let eigenvalues: Vec<f64> = vals[..k].to_vec();
    let explained = eigenvalues
        .iter()
        .map(|v| if total > 0.0 { v.max(0.0) / total } else { 0.0 })
        .collect();
    let mut proj = Vec::with_capacity(samples * k);
    for row in data.chunks_exact(dim) {
        for c in &components {
            proj.push(row.iter().zip(&mean).zip(c).map(|((x, m), w)| (x - m) * w).sum());
        }
    }
    Ok(PcaResult {
        components,
        eigenvalues,
        explained,
        mean,
        projections: Tensor::new(vec![traj, t, k], proj)?,
    })
}

/// Mean-centered covariance (divided by the sample count), row-major `dim × dim`.
pub fn covariance(data: &[f64], mean: &[f64], dim: usize) -> Vec<f64> {
    let samples = data.len() / dim;
    let mut c = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((z, x), m) in centered.iter_mut().zip(row).zip(mean) {
            *z = x - m;
        }
        for i in 0..dim {
            let zi = centered[i];
            if zi == 0.0 {
                continue;
            }
            for j in i..dim {
                c[i * dim + j] += zi * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = c[i * dim + j] / samples as f64;
            c[i * dim + j] = v;
            c[j * dim + i] = v;
        }
    }
    c
}

/// Eigen-decomposition of a symmetric row-major matrix by cyclic Jacobi
/// rotations. Returns eigenvalues in descending order with unit eigenvectors.
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if a.len() != n * n {
        return Err(Error::dim(
            "symmetric_eigen",
            format!("{} entries for a {n}x{n} matrix", a.len()),
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (m[p * n + p], m[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let vals = order.iter().map(|&i| m[i * n + i]).collect();
    let vecs = order.iter().map(|&i| (0..n).map(|k| v[k * n + i]).collect()).collect();
    Ok((vals, vecs))
}

/// One named curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Write `path` as an SVG line chart and a sibling `.csv` with the same numbers.
/// Returns the CSV path.
pub fn emit_plot(series: &[Series], path: impl AsRef<Path>, title: &str) -> Result<PathBuf> {
    let path = path.as_ref();
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidParam("nothing to plot".into()));
    }
    let finite = series
        .iter()
        .flat_map(|s| &s.points)
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return Err(Error::InvalidParam("no finite points to plot".into()));
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 70.0, 150.0, 30.0, 40.0);
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="13">{}</text>"#,
        ml,
        escape(title)
    );
    let (ax0, ax1, ay0, ay1) = (px(x0), px(x1), py(y0), py(y1));
    let _ = writeln!(
        svg,
        r#"<line x1="{ax0}" y1="{ay0}" x2="{ax1}" y2="{ay0}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ax0}" y1="{ay0}" x2="{ax0}" y2="{ay1}" stroke="black"/>"#
    );
    for (v, pos, anchor) in [(x0, (ax0, ay0 + 16.0), "start"), (x1, (ax1, ay0 + 16.0), "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#,
            pos.0,
            pos.1,
            tick(v)
        );
    }
    for (v, y) in [(y0, ay0), (y1, ay1 + 10.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            ax0 - 4.0,
            tick(v)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = mt + 16.0 * i as f64 + 8.0;
        let lx = w - mr + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))?;

    let csv_path = path.with_extension("csv");
    let mut csv = String::from("series,t,value\n");
    for s in series {
        for &(x, y) in &s.points {
            let _ = writeln!(csv, "{},{x},{y}", s.name.replace(',', ";"));
        }
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok(csv_path)
}

/// Read back the CSV written by [`emit_plot`].
pub fn read_plot_csv(path: impl AsRef<Path>) -> Result<Vec<Series>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<Series> = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
        let mut it = line.rsplitn(3, ',');
        let (y, x, name) = match (it.next(), it.next(), it.next()) {
            (Some(y), Some(x), Some(n)) => (y, x, n),
            _ => return Err(Error::format(path, format!("bad row '{line}'"))),
        };
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::format(path, format!("'{s}': {e}")));
        let pt = (parse(x)?, parse(y)?);
        match out.last_mut() {
            Some(s) if s.name == name => s.points.push(pt),
            _ => out.push(Series::new(name, vec![pt])),
        }
    }
    Ok(out)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
