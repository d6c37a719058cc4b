//! Trajectory datasets: generation, Z-score normalization, splitting and persistence.
//!
//! On disk a dataset is a directory holding `manifest.json`, `data.bin`,
//! `adjacency.bin` and, when the control width is nonzero, `controls.bin`.
//! Binary files are little-endian `f64`, row-major.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ad::Tensor;
use crate::dynamics::{simulate_trajectory, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::graphs::{GraphSpec, Topology};
use crate::rng::{self, Rng};

pub const FORMAT_VERSION: u32 = 1;
/// Floor applied to the standard deviation of constant dimensions.
pub const STD_FLOOR: f64 = 1e-8;
/// Fresh initial states drawn for a trajectory before its failure is reported.
pub const MAX_RESAMPLES: usize = 100;

/// Per-dimension standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions whose sample std fell below [`STD_FLOOR`].
    #[serde(default)]
    pub floored: Vec<bool>,
}

impl NormStats {
    pub fn identity(d: usize) -> Self {
        NormStats {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            floored: vec![false; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardize a buffer whose innermost axis is the state dimension.
    pub fn apply_in_place(&self, values: &mut [f64]) {
        let d = self.dim();
        for row in values.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn invert_in_place(&self, values: &mut [f64]) {
        let d = self.dim();
        for row in values.chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
    }
}

/// A batch of trajectories laid out as `[trajectory, time, node, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub data: Tensor,
    pub controls: Tensor,
    pub dt: f64,
    pub system: SystemSpec,
    /// One or more coupling graphs over the same node set.
    pub graphs: Vec<GraphSpec>,
    /// Index into `graphs` for each trajectory.
    pub adjacency_index: Vec<usize>,
    pub norm: Option<NormStats>,
    pub seed: u64,
    /// Free-form record of generation choices, persisted verbatim in the manifest.
    pub provenance: serde_json::Value,
}

impl TrajectorySet {
    pub fn n_traj(&self) -> usize {
        self.data.shape()[0]
    }

    /// Snapshots per trajectory.
    pub fn len_time(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_nodes(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn state_dim(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn control_dim(&self) -> usize {
        self.controls.shape()[3]
    }

    fn traj_stride(&self) -> usize {
        self.len_time() * self.n_nodes() * self.state_dim()
    }

    /// Trajectory `i` as a flat `[T, n, d]` slice.
    pub fn trajectory(&self, i: usize) -> &[f64] {
        let s = self.traj_stride();
        &self.data.data()[i * s..(i + 1) * s]
    }

    pub fn controls_of(&self, i: usize) -> &[f64] {
        let s = self.len_time() * self.n_nodes() * self.control_dim();
        &self.controls.data()[i * s..(i + 1) * s]
    }

    pub fn initial_state(&self, i: usize) -> &[f64] {
        &self.trajectory(i)[..self.n_nodes() * self.state_dim()]
    }

    pub fn graph_of(&self, i: usize) -> &GraphSpec {
        &self.graphs[self.adjacency_index[i]]
    }

    /// Trajectory `i` in physical units.
    pub fn physical_trajectory(&self, i: usize) -> Vec<f64> {
        let mut v = self.trajectory(i).to_vec();
        if let Some(norm) = &self.norm {
            norm.invert_in_place(&mut v);
        }
        v
    }

    /// New set holding the listed trajectories, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<TrajectorySet> {
        let n = self.n_traj();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Index {
                op: "TrajectorySet::subset",
                index: bad,
                len: n,
            });
        }
        let s = self.traj_stride();
        let cs = self.len_time() * self.n_nodes() * self.control_dim();
        let mut data = Vec::with_capacity(indices.len() * s);
        let mut controls = Vec::with_capacity(indices.len() * cs);
        for &i in indices {
            data.extend_from_slice(self.trajectory(i));
            controls.extend_from_slice(self.controls_of(i));
        }
        let mut shape = self.data.shape().to_vec();
        shape[0] = indices.len();
        let mut cshape = self.controls.shape().to_vec();
        cshape[0] = indices.len();
        Ok(TrajectorySet {
            data: Tensor::new(shape, data)?,
            controls: Tensor::new(cshape, controls)?,
            adjacency_index: indices.iter().map(|&i| self.adjacency_index[i]).collect(),
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> TrajectorySet {
        TrajectorySet {
            data: Tensor::zeros(vec![0, 0, 0, 0]),
            controls: Tensor::zeros(vec![0, 0, 0, 0]),
            dt: self.dt,
            system: self.system.clone(),
            graphs: self.graphs.clone(),
            adjacency_index: Vec::new(),
            norm: self.norm.clone(),
            seed: self.seed,
            provenance: self.provenance.clone(),
        }
    }

    /// SHA-256 over the serialized manifest and data.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.manifest()).expect("manifest serializes"));
        for v in self.data.data().iter().chain(self.controls.data()) {
            h.update(v.to_le_bytes());
        }
        for g in &self.graphs {
            for v in g.adjacency() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Uniform initial states in the per-system ranges.
///
/// Pendulum: `θ ∈ (−π/2, π/2)`, `θ̇ ∈ [−1, 1]`; Lorenz: `[−10, 10]³`;
/// gene: `[0, 50]`; Kuramoto: `[−1, 1]`.
pub fn sample_initial_states_with(sys: &SystemSpec, n_nodes: usize, r: &mut Rng) -> Tensor {
    let d = sys.state_dim();
    let mut data = Vec::with_capacity(n_nodes * d);
    for _ in 0..n_nodes {
        match sys.kind() {
            SystemKind::Pendulum => {
                let h = std::f64::consts::FRAC_PI_2;
                let mut th: f64 = r.gen_range(-h..h);
                while th.cos().abs() <= 1e-9 {
                    th = r.gen_range(-h..h);
                }
                data.push(th);
                data.push(r.gen_range(-1.0..=1.0));
            }
            SystemKind::Lorenz => data.extend((0..3).map(|_| r.gen_range(-10.0..=10.0))),
            SystemKind::Gene => data.push(r.gen_range(0.0..=50.0)),
            SystemKind::Kuramoto => data.push(r.gen_range(-1.0..=1.0)),
        }
    }
    Tensor::new(vec![n_nodes, d], data).expect("sized by construction")
}

pub fn sample_initial_states(sys: &SystemSpec, n_nodes: usize, seed: u64) -> Tensor {
    sample_initial_states_with(sys, n_nodes, &mut rng::from_seed(seed))
}

/// Seeded natural frequencies `b_i ~ Uniform[−1, 1]`.
pub fn kuramoto_frequencies(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::from_seed(seed);
    (0..n).map(|_| r.gen_range(-1.0..=1.0)).collect()
}

/// Simulate `n_traj` trajectories; trajectory `i` uses graph `i % graphs.len()`
/// and its own random stream derived from `(seed, i)`.
pub fn generate_dataset(
    sys: &SystemSpec,
    graphs: &[GraphSpec],
    n_traj: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectorySet> {
    if n_traj == 0 {
        return Err(Error::InvalidParam("dataset needs at least one trajectory".into()));
    }
    let n = graphs
        .first()
        .ok_or_else(|| Error::InvalidParam("dataset needs at least one graph".into()))?
        .n();
    if graphs.iter().any(|g| g.n() != n) {
        return Err(Error::InvalidParam(
            "all adjacencies of a dataset must share the node count".into(),
        ));
    }
    for g in graphs {
        sys.validate(g)?;
    }
    let steps = crate::dynamics::step_count(horizon, dt)?;
    if steps == 0 {
        return Err(Error::InvalidParam("trajectories need at least two snapshots".into()));
    }
    let results: Vec<Result<(Tensor, usize)>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let graph = &graphs[i % graphs.len()];
            let mut r = rng::substream(seed, i as u64);
            let mut last = None;
            for attempt in 0..MAX_RESAMPLES {
                let x0 = sample_initial_states_with(sys, n, &mut r);
                match simulate_trajectory(sys, graph, &x0, horizon, dt) {
                    Ok(t) => return Ok((t, attempt)),
                    Err(e @ (Error::Divergence(_) | Error::Domain(_))) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last
                .expect("at least one attempt")
                .with_context(format!("trajectory {i} after {MAX_RESAMPLES} initial states")))
        })
        .collect();
    let d = sys.state_dim();
    let mut data = Vec::with_capacity(n_traj * (steps + 1) * n * d);
    let mut resampled = 0;
    for r in results {
        let (t, extra) = r?;
        resampled += extra;
        data.extend_from_slice(t.data());
    }
    let c = sys.control_dim();
    Ok(TrajectorySet {
        data: Tensor::new(vec![n_traj, steps + 1, n, d], data)?,
        controls: Tensor::zeros(vec![n_traj, steps + 1, n, c]),
        dt,
        system: sys.clone(),
        graphs: graphs.to_vec(),
        adjacency_index: (0..n_traj).map(|i| i % graphs.len()).collect(),
        norm: None,
        seed,
        provenance: serde_json::json!({
            "horizon": horizon,
            "integrator": "rk4-fixed-step",
            "initial_state_ranges": initial_ranges(sys.kind()),
            "lorenz_coupling": "diffusive on x: dx_i += sum_j A_ij (x_j - x_i)",
            "resampled_initial_states": resampled,
        }),
    })
}

fn initial_ranges(kind: SystemKind) -> serde_json::Value {
    match kind {
        SystemKind::Pendulum => {
            serde_json::json!({"theta": [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2], "theta_dot": [-1.0, 1.0]})
        }
        SystemKind::Lorenz => serde_json::json!({"xyz": [-10.0, 10.0]}),
        SystemKind::Gene => serde_json::json!({"x": [0.0, 50.0]}),
        SystemKind::Kuramoto => serde_json::json!({"phase": [-1.0, 1.0]}),
    }
}

/// Per-dimension mean and sample standard deviation pooled over trajectories, time and nodes.
pub fn zscore_fit(ts: &TrajectorySet) -> Result<NormStats> {
    if ts.norm.is_some() {
        return Err(Error::InvalidParam("zscore_fit expects un-normalized data".into()));
    }
    fit_stats(ts.data.data(), ts.state_dim())
}

pub(crate) fn fit_stats(values: &[f64], d: usize) -> Result<NormStats> {
    let count = values.len().checked_div(d).unwrap_or(0);
    if count < 2 {
        return Err(Error::InvalidParam(format!(
            "need at least 2 pooled samples per dimension, got {count}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in values.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; d];
    for row in values.chunks_exact(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let mut floored = vec![false; d];
    let std = var
        .iter()
        .zip(floored.iter_mut())
        .map(|(s, f)| {
            let sd = (s / (count - 1) as f64).sqrt();
            if sd < STD_FLOOR {
                *f = true;
                STD_FLOOR
            } else {
                sd
            }
        })
        .collect();
    Ok(NormStats { mean, std, floored })
}

fn check_norm_dims(ts: &TrajectorySet, norm: &NormStats) -> Result<()> {
    if norm.dim() != ts.state_dim() || norm.std.len() != norm.dim() {
        return Err(Error::dim(
            "zscore",
            format!("stats for {} dims, data has {}", norm.dim(), ts.state_dim()),
        ));
    }
    Ok(())
}

/// `(x − mean) / std`; the result carries `norm`.
pub fn zscore_apply(ts: &TrajectorySet, norm: &NormStats) -> Result<TrajectorySet> {
    check_norm_dims(ts, norm)?;
    if ts.norm.is_some() {
        return Err(Error::InvalidParam("data is already normalized".into()));
    }
    let mut out = ts.clone();
    norm.apply_in_place(out.data.data_mut());
    out.norm = Some(norm.clone());
    Ok(out)
}

/// `x * std + mean`; the result is un-normalized.
pub fn zscore_invert(ts: &TrajectorySet, norm: &NormStats) -> Result<TrajectorySet> {
    check_norm_dims(ts, norm)?;
    let mut out = ts.clone();
    norm.invert_in_place(out.data.data_mut());
    out.norm = None;
    Ok(out)
}

/// Random trajectory-level split; normalization is fitted on the training part and applied to both.
pub fn split_train_val(ts: &TrajectorySet, fraction: f64, seed: u64) -> Result<(TrajectorySet, TrajectorySet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParam(format!(
            "split fraction {fraction} must be in (0, 1)"
        )));
    }
    let raw = match &ts.norm {
        Some(n) => zscore_invert(ts, n)?,
        None => ts.clone(),
    };
    let n = raw.n_traj();
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParam(format!(
            "splitting {n} trajectories at {fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::from_seed(seed));
    let (tr, va) = order.split_at(n_train);
    let mut tr = tr.to_vec();
    let mut va = va.to_vec();
    tr.sort_unstable();
    va.sort_unstable();
    let train = raw.subset(&tr)?;
    let val = raw.subset(&va)?;
    let norm = zscore_fit(&train)?;
    Ok((zscore_apply(&train, &norm)?, zscore_apply(&val, &norm)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphEntry {
    n: usize,
    topology_tag: Topology,
    seed: u64,
    /// Offset into `adjacency.bin`, in `f64` elements.
    adjacency_offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    system: SystemSpec,
    graphs: Vec<GraphEntry>,
    n_traj: usize,
    #[serde(rename = "T")]
    t: usize,
    n_nodes: usize,
    d: usize,
    c: usize,
    dt: f64,
    seed: u64,
    norm: Option<NormStats>,
    adjacency_index_per_traj: Vec<usize>,
    #[serde(default)]
    provenance: serde_json::Value,
}

impl TrajectorySet {
    fn manifest(&self) -> Manifest {
        let mut offset = 0;
        let graphs = self
            .graphs
            .iter()
            .map(|g| {
                let e = GraphEntry {
                    n: g.n(),
                    topology_tag: g.topology(),
                    seed: g.seed(),
                    adjacency_offset: offset,
                };
                offset += g.n() * g.n();
                e
            })
            .collect();
        Manifest {
            format_version: FORMAT_VERSION,
            system: self.system.clone(),
            graphs,
            n_traj: self.n_traj(),
            t: self.len_time(),
            n_nodes: self.n_nodes(),
            d: self.state_dim(),
            c: self.control_dim(),
            dt: self.dt,
            seed: self.seed,
            norm: self.norm.clone(),
            adjacency_index_per_traj: self.adjacency_index.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

pub(crate) fn f64s_to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn bytes_to_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64_file(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::format(
            path,
            format!("size mismatch: expected {} bytes, found {}", expected * 8, bytes.len()),
        ));
    }
    Ok(bytes_to_f64s(&bytes))
}

pub fn save_dataset(ts: &TrajectorySet, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = serde_json::to_vec_pretty(&ts.manifest()).expect("manifest serializes");
    write(&dir.join("manifest.json"), &manifest)?;
    write(&dir.join("data.bin"), &f64s_to_bytes(ts.data.data()))?;
    let adj: Vec<f64> = ts.graphs.iter().flat_map(|g| g.adjacency().iter().copied()).collect();
    write(&dir.join("adjacency.bin"), &f64s_to_bytes(&adj))?;
    if ts.control_dim() > 0 {
        write(&dir.join("controls.bin"), &f64s_to_bytes(ts.controls.data()))?;
    }
    Ok(())
}

const KNOWN_KINDS: [&str; 4] = ["pendulum", "lorenz", "gene", "kuramoto"];

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<TrajectorySet> {
    let dir = dir.as_ref();
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    let version = raw.get("format_version").and_then(|v| v.as_u64());
    if version != Some(FORMAT_VERSION as u64) {
        return Err(Error::format(
            &mpath,
            format!("unsupported format_version {version:?}, expected {FORMAT_VERSION}"),
        ));
    }
    let kind = raw
        .get("system")
        .and_then(|s| s.get("kind"))
        .and_then(|k| k.as_str())
        .unwrap_or("<missing>")
        .to_string();
    if !KNOWN_KINDS.contains(&kind.as_str()) {
        return Err(Error::Unsupported(format!(
            "system kind '{kind}' in {}",
            mpath.display()
        )));
    }
    let m: Manifest = serde_json::from_value(raw).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.d != m.system.state_dim() {
        return Err(Error::format(
            &mpath,
            format!("d = {} does not match system kind {kind}", m.d),
        ));
    }
    if m.adjacency_index_per_traj.len() != m.n_traj || m.adjacency_index_per_traj.iter().any(|&i| i >= m.graphs.len()) {
        return Err(Error::format(
            &mpath,
            "adjacency_index_per_traj inconsistent with graphs",
        ));
    }
    if m.t < 2 {
        return Err(Error::format(&mpath, "trajectories need T >= 2"));
    }
    let data = read_f64_file(&dir.join("data.bin"), m.n_traj * m.t * m.n_nodes * m.d)?;
    let adj_len: usize = m.graphs.iter().map(|g| g.n * g.n).sum();
    let adj = read_f64_file(&dir.join("adjacency.bin"), adj_len)?;
    let graphs = m
        .graphs
        .iter()
        .map(|g| {
            if g.n != m.n_nodes || g.adjacency_offset + g.n * g.n > adj.len() {
                return Err(Error::format(&mpath, "graph entry inconsistent with adjacency.bin"));
            }
            GraphSpec::with_tag(
                g.n,
                adj[g.adjacency_offset..g.adjacency_offset + g.n * g.n].to_vec(),
                g.topology_tag,
                g.seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for g in &graphs {
        m.system.validate(g)?;
    }
    let controls = if m.c > 0 {
        read_f64_file(&dir.join("controls.bin"), m.n_traj * m.t * m.n_nodes * m.c)?
    } else {
        Vec::new()
    };
    if let Some(norm) = &m.norm {
        if norm.mean.len() != m.d || norm.std.len() != m.d {
            return Err(Error::format(&mpath, "norm stats width does not match d"));
        }
    }
    Ok(TrajectorySet {
        data: Tensor::new(vec![m.n_traj, m.t, m.n_nodes, m.d], data)?,
        controls: Tensor::new(vec![m.n_traj, m.t, m.n_nodes, m.c], controls)?,
        dt: m.dt,
        system: m.system,
        graphs,
        adjacency_index: m.adjacency_index_per_traj,
        norm: m.norm,
        seed: m.seed,
        provenance: m.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{GeneParams, KuramotoParams, PendulumParams};
    use crate::graphs::gen_fixed_degree;

    fn kuramoto_small(n_traj: usize) -> TrajectorySet {
        let g = gen_fixed_degree(6, 3, 1).unwrap();
        let sys = SystemSpec::Kuramoto(KuramotoParams {
            b: kuramoto_frequencies(6, 2),
        });
        generate_dataset(&sys, &[g], n_traj, 0.5, 0.05, 3).unwrap()
    }

    #[test]
    fn initial_state_ranges() {
        let p = SystemSpec::Pendulum(PendulumParams::default());
        let x = sample_initial_states(&p, 2, 9);
        for node in x.data().chunks(2) {
            assert!(node[0].abs() < std::f64::consts::FRAC_PI_2);
            assert!(node[1].abs() <= 1.0);
        }
        let gsys = SystemSpec::Gene(GeneParams::standard(16));
        let x = sample_initial_states(&gsys, 16, 9);
        assert!(x.data().iter().all(|v| (0.0..=50.0).contains(v)));
        assert_eq!(x, sample_initial_states(&gsys, 16, 9));
    }

    #[test]
    fn zscore_fit_simple() {
        let stats = fit_stats(&[1.0, 2.0, 3.0], 1).unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.std, vec![1.0]);
        let flat = fit_stats(&[4.0, 4.0, 4.0], 1).unwrap();
        assert_eq!(flat.std, vec![STD_FLOOR]);
        assert_eq!(flat.floored, vec![true]);
        assert!(fit_stats(&[1.0], 1).is_err());
    }

    #[test]
    fn identity_norm_leaves_data() {
        let ts = kuramoto_small(3);
        let out = zscore_apply(&ts, &NormStats::identity(1)).unwrap();
        assert_eq!(out.data, ts.data);
    }

    #[test]
    fn split_sizes_and_partition() {
        let ts = kuramoto_small(20);
        let (tr, va) = split_train_val(&ts, 0.7, 5).unwrap();
        assert_eq!((tr.n_traj(), va.n_traj()), (14, 6));
        assert!(tr.norm.is_some() && tr.norm == va.norm);
        assert!(split_train_val(&ts, 0.0, 5).is_err());
        assert!(split_train_val(&ts, 0.99, 5).is_err());
    }

    #[test]
    fn generation_rejects_empty() {
        let g = GraphSpec::complete(2);
        let sys = SystemSpec::Pendulum(PendulumParams::default());
        assert!(generate_dataset(&sys, std::slice::from_ref(&g), 0, 1.0, 0.1, 0).is_err());
        assert!(generate_dataset(&sys, &[], 1, 1.0, 0.1, 0).is_err());
        assert!(generate_dataset(&sys, &[GraphSpec::complete(3)], 1, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn single_constant_trajectory() {
        let g = GraphSpec::explicit(1, vec![0.0]).unwrap();
        let sys = SystemSpec::Kuramoto(KuramotoParams { b: vec![0.0] });
        let ts = generate_dataset(&sys, &[g], 1, 1.0, 0.05, 0).unwrap();
        assert_eq!(ts.n_traj(), 1);
        let x0 = ts.initial_state(0)[0];
        assert!(ts.trajectory(0).iter().all(|&v| v == x0));
    }
}
