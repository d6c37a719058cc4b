//! Ground-truth vector fields for the coupled test systems and trajectory simulation.
//!
//! States are flat node-major vectors: node `k` occupies `[k*d, (k+1)*d)`.
//! Coupling sums over neighbors are accumulated in ascending value order so a
//! relabelling of the nodes permutes trajectories bit-exactly.

mod rk4;

pub use rk4::{rk4_step, rk4_step_plain, Plain, StepAlgebra};

use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::graphs::GraphSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Spring constant of the coupling string.
    pub k: f64,
    pub g: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            m1: 1.0,
            m2: 1.0,
            l1: 1.5,
            l2: 1.5,
            k: 2.0,
            g: 9.81,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            sigma: 10.0,
            rho: 28.0,
            beta: 2.666,
        }
    }
}

/// Michaelis–Menten regulatory dynamics `-b_i x_i^g + Σ_j A_ij x_j^h / (x_j^h + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneParams {
    /// Per-node degradation rates.
    pub b: Vec<f64>,
    pub g_exp: f64,
    pub h_exp: f64,
}

impl GeneParams {
    /// `b_i = 1`, `g = 1`, `h = 2`.
    pub fn standard(n: usize) -> Self {
        GeneParams {
            b: vec![1.0; n],
            g_exp: 1.0,
            h_exp: 2.0,
        }
    }
}

/// Phase oscillators `b_i + Σ_j A_ij sin(x_j − x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuramotoParams {
    /// Per-node natural frequencies.
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Pendulum,
    Lorenz,
    Gene,
    Kuramoto,
}

impl SystemKind {
    pub fn state_dim(self) -> usize {
        match self {
            SystemKind::Pendulum => 2,
            SystemKind::Lorenz => 3,
            SystemKind::Gene | SystemKind::Kuramoto => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Pendulum => "pendulum",
            SystemKind::Lorenz => "lorenz",
            SystemKind::Gene => "gene",
            SystemKind::Kuramoto => "kuramoto",
        }
    }
}

/// A ground-truth system together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemSpec {
    Pendulum(PendulumParams),
    Lorenz(LorenzParams),
    Gene(GeneParams),
    Kuramoto(KuramotoParams),
}

impl SystemSpec {
    pub fn kind(&self) -> SystemKind {
        match self {
            SystemSpec::Pendulum(_) => SystemKind::Pendulum,
            SystemSpec::Lorenz(_) => SystemKind::Lorenz,
            SystemSpec::Gene(_) => SystemKind::Gene,
            SystemSpec::Kuramoto(_) => SystemKind::Kuramoto,
        }
    }

    /// Per-node state width `d`.
    pub fn state_dim(&self) -> usize {
        self.kind().state_dim()
    }

    /// Per-node control width `c`; zero for every supported system.
    pub fn control_dim(&self) -> usize {
        0
    }

    /// Verify that parameters and the coupling graph agree.
    pub fn validate(&self, graph: &GraphSpec) -> Result<()> {
        let n = graph.n();
        match self {
            SystemSpec::Pendulum(p) => {
                if n != 2 {
                    return Err(Error::InvalidParam(format!(
                        "coupled pendulum has 2 nodes, graph has {n}"
                    )));
                }
                if !(p.m1 > 0.0 && p.m2 > 0.0 && p.l1 > 0.0 && p.l2 > 0.0) {
                    return Err(Error::InvalidParam(
                        "pendulum masses and lengths must be positive".into(),
                    ));
                }
            }
            SystemSpec::Lorenz(_) => {}
            SystemSpec::Gene(p) => {
                if p.b.len() != n {
                    return Err(Error::dim("gene params", format!("{} rates for {n} nodes", p.b.len())));
                }
                if !(p.b.iter().all(|&b| b > 0.0) && p.g_exp > 0.0 && p.h_exp > 0.0) {
                    return Err(Error::InvalidParam("gene rates and exponents must be positive".into()));
                }
            }
            SystemSpec::Kuramoto(p) => {
                if p.b.len() != n {
                    return Err(Error::dim(
                        "kuramoto params",
                        format!("{} frequencies for {n} nodes", p.b.len()),
                    ));
                }
                if !p.b.iter().all(|b| b.is_finite()) {
                    return Err(Error::InvalidParam("natural frequencies must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Time derivative of the flat node-major state.
    pub fn rhs(&self, graph: &GraphSpec, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.state_dim();
        if x.len() != graph.n() * d {
            return Err(Error::dim(
                "rhs",
                format!(
                    "{} nodes x {d} dims needs {} values, got {}",
                    graph.n(),
                    graph.n() * d,
                    x.len()
                ),
            ));
        }
        match self {
            SystemSpec::Pendulum(p) => pendulum_rhs(x, p),
            SystemSpec::Lorenz(p) => lorenz_coupled_rhs(x, p, graph),
            SystemSpec::Gene(p) => gene_rhs(x, p, graph),
            SystemSpec::Kuramoto(p) => kuramoto_rhs(x, p, graph),
        }
    }
}

fn order_free_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

const COS_GUARD: f64 = 1e-9;

/// `[θ̇1, θ̈1, θ̇2, θ̈2]` for two pendula joined by a spring.
pub fn pendulum_rhs(state: &[f64], p: &PendulumParams) -> Result<Vec<f64>> {
    let &[th1, w1, th2, w2] = state else {
        return Err(Error::dim(
            "pendulum_rhs",
            format!("state has {} values, expected 4", state.len()),
        ));
    };
    let (c1, c2) = (th1.cos(), th2.cos());
    if c1.abs() <= COS_GUARD || c2.abs() <= COS_GUARD {
        return Err(Error::Domain(format!(
            "pendulum singular at theta = ({th1}, {th2}): |cos theta| <= {COS_GUARD}"
        )));
    }
    let (s1, s2) = (th1.sin(), th2.sin());
    let a1 = (s1 * (p.m1 * p.l1 * w1 * w1 - p.g - p.k * p.l1) + p.k * p.l2 * s2) / (p.m1 * p.l1 * c1);
    let a2 = (s2 * (p.m2 * p.l2 * w2 * w2 - p.g - p.k * p.l2) + p.k * p.l1 * s1) / (p.m2 * p.l2 * c2);
    Ok(vec![w1, a1, w2, a2])
}

/// Lorenz nodes with diffusive coupling `Σ_j A_ij (x_j − x_i)` on the first component.
pub fn lorenz_coupled_rhs(states: &[f64], p: &LorenzParams, graph: &GraphSpec) -> Result<Vec<f64>> {
    let n = graph.n();
    let mut out = vec![0.0; n * 3];
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let (x, y, z) = (states[3 * i], states[3 * i + 1], states[3 * i + 2]);
        terms.clear();
        terms.extend(
            graph
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(j, w)| w * (states[3 * j] - x)),
        );
        out[3 * i] = p.sigma * (y - x) + order_free_sum(&mut terms);
        out[3 * i + 1] = x * (p.rho - z) - y;
        out[3 * i + 2] = x * y - p.beta * z;
    }
    Ok(out)
}

pub fn gene_rhs(states: &[f64], p: &GeneParams, graph: &GraphSpec) -> Result<Vec<f64>> {
    if let Some((i, v)) = states.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::Domain(format!("gene expression at node {i} is negative ({v})")));
    }
    let hill: Vec<f64> = states
        .iter()
        .map(|&x| {
            let xh = x.powf(p.h_exp);
            xh / (xh + 1.0)
        })
        .collect();
    let n = graph.n();
    let mut terms = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| {
            terms.clear();
            terms.extend(
                graph
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(j, w)| w * hill[j]),
            );
            -p.b[i] * states[i].powf(p.g_exp) + order_free_sum(&mut terms)
        })
        .collect())
}

pub fn kuramoto_rhs(states: &[f64], p: &KuramotoParams, graph: &GraphSpec) -> Result<Vec<f64>> {
    let n = graph.n();
    let mut terms = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| {
            terms.clear();
            terms.extend(
                graph
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(j, w)| w * (states[j] - states[i]).sin()),
            );
            p.b[i] + order_free_sum(&mut terms)
        })
        .collect())
}

/// Number of steps covering `horizon` exactly, or an error if `horizon/dt` is not integral.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "need dt > 0 and horizon >= 0, got dt={dt}, horizon={horizon}"
        )));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!(
            "horizon {horizon} is not a whole number of {dt} steps"
        )));
    }
    Ok(steps as usize)
}

/// Integrate from `x0: [n, d]` and return `horizon/dt + 1` snapshots as `[T, n, d]`.
pub fn simulate_trajectory(sys: &SystemSpec, graph: &GraphSpec, x0: &Tensor, horizon: f64, dt: f64) -> Result<Tensor> {
    sys.validate(graph)?;
    let (n, d) = (graph.n(), sys.state_dim());
    if x0.shape() != [n, d] {
        return Err(Error::dim(
            "simulate_trajectory",
            format!("x0 shape {:?}, expected [{n}, {d}]", x0.shape()),
        ));
    }
    let steps = step_count(horizon, dt)?;
    let mut data = Vec::with_capacity((steps + 1) * n * d);
    let mut x = x0.data().to_vec();
    data.extend_from_slice(&x);
    for step in 0..steps {
        x = rk4_step_plain(|v| sys.rhs(graph, v), &x, dt).map_err(|e| e.with_context(format!("step {step}")))?;
        data.extend_from_slice(&x);
    }
    Tensor::new(vec![steps + 1, n, d], data)
}
