//! The message-passing neural ODE.
//!
//! One MLP `f_θ` is shared by every node. A node's augmented state is
//! `[x_k; m_k]`; at each observation step its incoming message is the mean of
//! its neighbors' outgoing messages, and `[x_k; m'_k]` is advanced by one RK4
//! step of `d/dt [x; m'] = f_θ([x; m'], u)`. The integrated message component
//! becomes the node's next outgoing message. Only `x` is ever supervised.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ad::{Dims, Gradients, Tape, Tensor, Var};
use crate::dynamics::rk4_step;
use crate::error::{Error, Result};
use crate::graphs::GraphSpec;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(v),
            Activation::Relu => tape.relu(v),
        }
    }
}

/// Widths and activation of the shared per-node network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub message_dim: usize,
    #[serde(default)]
    pub control_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl ModelConfig {
    /// Two hidden tanh layers of width 64.
    pub fn new(state_dim: usize, message_dim: usize) -> Self {
        ModelConfig {
            state_dim,
            message_dim,
            control_dim: 0,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn input_width(&self) -> usize {
        self.state_dim + self.message_dim + self.control_dim
    }

    pub fn output_width(&self) -> usize {
        self.state_dim + self.message_dim
    }

    /// `(out, in)` for every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_width()];
        widths.extend(&self.hidden);
        widths.push(self.output_width());
        widths.windows(2).map(|w| (w[1], w[0])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Shared parameters `θ`; their size does not depend on the node count.
#[derive(Debug, Clone, PartialEq)]
pub struct MpNodeModel {
    config: ModelConfig,
    layers: Vec<Layer>,
}

impl MpNodeModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut r = rng::from_seed(seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let limit = if out + inp > 0 {
                    (6.0 / (out + inp) as f64).sqrt()
                } else {
                    0.0
                };
                let w = (0..out * inp)
                    .map(|_| if limit > 0.0 { r.gen_range(-limit..limit) } else { 0.0 })
                    .collect();
                Layer {
                    weight: Tensor::matrix(out, inp, w).expect("sized"),
                    bias: Tensor::zeros(vec![out]),
                }
            })
            .collect();
        MpNodeModel { config, layers }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Layer {
                weight: Tensor::zeros(vec![out, inp]),
                bias: Tensor::zeros(vec![out]),
            })
            .collect();
        MpNodeModel { config, layers }
    }

    pub fn from_layers(config: ModelConfig, layers: Vec<Layer>) -> Result<Self> {
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::Compatibility(format!(
                "config declares {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, ((out, inp), l)) in shapes.iter().zip(&layers).enumerate() {
            if l.weight.shape() != [*out, *inp] || l.bias.shape() != [*out] {
                return Err(Error::Compatibility(format!(
                    "layer {i}: expected {out}x{inp}, got {:?} / {:?}",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        Ok(MpNodeModel { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Parameter tensors in declared order `W0, b0, W1, b1, ...`.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Put the parameters on a tape as differentiable leaves.
    pub fn register(&self, tape: &mut Tape) -> TapedNet {
        self.put_on(tape, true)
    }

    /// Put the parameters on a tape as constants (inference only).
    pub fn register_frozen(&self, tape: &mut Tape) -> TapedNet {
        self.put_on(tape, false)
    }

    fn put_on(&self, tape: &mut Tape, differentiable: bool) -> TapedNet {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let put = |tape: &mut Tape, t: &Tensor| {
                    if differentiable {
                        tape.param(t)
                    } else {
                        tape.constant(t)
                    }
                    .expect("rank <= 2")
                };
                (put(tape, &l.weight), put(tape, &l.bias))
            })
            .collect();
        TapedNet {
            config: self.config.clone(),
            layers,
        }
    }

    /// Rollout without gradient bookkeeping.
    pub fn rollout(
        &self,
        graph: &GraphSpec,
        x0: &Tensor,
        controls: Option<&Tensor>,
        steps: usize,
        dt: f64,
        clamp_messages: bool,
    ) -> Result<Rollout> {
        let mut tape = Tape::new();
        let net = self.register_frozen(&mut tape);
        let r = rollout_taped(
            &mut tape,
            &net,
            graph,
            Source::Values(x0),
            controls,
            steps,
            dt,
            clamp_messages,
        )?;
        Ok(r.to_values(&tape))
    }
}

/// Model parameters living on a tape.
#[derive(Debug, Clone)]
pub struct TapedNet {
    config: ModelConfig,
    layers: Vec<(Var, Var)>,
}

impl TapedNet {
    /// Use existing tape nodes `W0, b0, W1, b1, ...` as the parameters.
    pub fn from_vars(tape: &Tape, config: ModelConfig, vars: &[Var]) -> Result<Self> {
        let shapes = config.layer_shapes();
        if vars.len() != 2 * shapes.len() {
            return Err(Error::dim(
                "TapedNet",
                format!("{} vars for {} layers", vars.len(), shapes.len()),
            ));
        }
        for (i, (&(out, inp), wb)) in shapes.iter().zip(vars.chunks(2)).enumerate() {
            if tape.dims(wb[0]) != Dims::Matrix(out, inp) || tape.dims(wb[1]) != Dims::Vector(out) {
                return Err(Error::dim("TapedNet", format!("layer {i} is not {out}x{inp}")));
            }
        }
        Ok(TapedNet {
            config,
            layers: vars.chunks(2).map(|wb| (wb[0], wb[1])).collect(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameter gradients in declared order, shaped like the parameters.
    pub fn gradients(&self, grads: &Gradients<'_>) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|&(w, b)| [grads.tensor(w), grads.tensor(b)])
            .collect()
    }

    pub fn param_vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

/// `f_θ(z)`: affine + activation for each hidden layer, affine output layer.
pub fn mlp_forward(tape: &mut Tape, net: &TapedNet, z: Var) -> Result<Var> {
    let width = tape.dims(z).len();
    if width != net.config.input_width() {
        return Err(Error::dim(
            "mlp_forward",
            format!("input width {width}, model expects {}", net.config.input_width()),
        ));
    }
    let last = net.layers.len() - 1;
    let mut h = z;
    for (i, &(w, b)) in net.layers.iter().enumerate() {
        let a = tape.matvec(w, h)?;
        h = tape.add(a, b)?;
        if i < last {
            h = net.config.activation.apply(tape, h);
        }
    }
    Ok(h)
}

/// Mean of the neighbors' outgoing messages, or zeros for an isolated node.
pub fn aggregate_incoming(tape: &mut Tape, graph: &GraphSpec, messages: &[Var], k: usize) -> Result<Var> {
    if messages.len() != graph.n() {
        return Err(Error::dim(
            "aggregate_incoming",
            format!("{} messages for {} nodes", messages.len(), graph.n()),
        ));
    }
    let nb: Vec<usize> = graph.neighbors_of(k)?.into_iter().map(|(j, _)| j).collect();
    let p = messages.first().map_or(0, |&m| tape.dims(m).len());
    aggregate_from(tape, &nb, messages, p)
}

fn aggregate_from(tape: &mut Tape, neighbors: &[usize], messages: &[Var], p: usize) -> Result<Var> {
    if neighbors.is_empty() {
        return Ok(tape.zeros(p));
    }
    let incoming: Vec<Var> = neighbors.iter().map(|&j| messages[j]).collect();
    tape.mean(&incoming)
}

/// Time derivative of `[x_k; m'_k]` given the node's control input.
pub fn augmented_rhs(tape: &mut Tape, net: &TapedNet, x_k: Var, m_in_k: Var, u_k: Option<Var>) -> Result<Var> {
    let mut parts = vec![x_k, m_in_k];
    parts.extend(u_k);
    let z = tape.concat(&parts)?;
    mlp_forward(tape, net, z)
}

fn field(tape: &mut Tape, net: &TapedNet, z: Var, u: Option<Var>) -> Result<Var> {
    match u {
        Some(u) => {
            let zu = tape.concat(&[z, u])?;
            mlp_forward(tape, net, zu)
        }
        None => mlp_forward(tape, net, z),
    }
}

/// Per-node state and outgoing message, as tape nodes.
#[derive(Debug, Clone)]
pub struct AugmentedState {
    pub x: Vec<Var>,
    pub m: Vec<Var>,
}

/// Advance every node by one observation step.
pub fn mpnode_step(
    tape: &mut Tape,
    net: &TapedNet,
    graph: &GraphSpec,
    state: &AugmentedState,
    controls: Option<&[Var]>,
    dt: f64,
) -> Result<AugmentedState> {
    step_with_neighbors(tape, net, &graph.neighbor_lists(), state, controls, dt)
}

fn step_with_neighbors(
    tape: &mut Tape,
    net: &TapedNet,
    neighbors: &[Vec<usize>],
    state: &AugmentedState,
    controls: Option<&[Var]>,
    dt: f64,
) -> Result<AugmentedState> {
    let n = state.x.len();
    if neighbors.len() != n || state.m.len() != n {
        return Err(Error::dim(
            "mpnode_step",
            format!("{n} node states for a {}-node graph", neighbors.len()),
        ));
    }
    let (d, p) = (net.config.state_dim, net.config.message_dim);
    let mut next = AugmentedState {
        x: Vec::with_capacity(n),
        m: Vec::with_capacity(n),
    };
    for (k, nbrs) in neighbors.iter().enumerate() {
        let incoming = aggregate_from(tape, nbrs, &state.m, p)?;
        let z = tape.concat(&[state.x[k], incoming])?;
        let u = if net.config.control_dim > 0 {
            Some(controls.ok_or_else(|| Error::dim("mpnode_step", "model expects controls"))?[k])
        } else {
            None
        };
        let z1 = rk4_step(tape, |t: &mut Tape, z: &Var| field(t, net, *z, u), &z, dt)
            .map_err(|e| e.with_context(format!("node {k}")))?;
        next.x.push(tape.slice(z1, 0, d)?);
        next.m.push(tape.slice(z1, d, d + p)?);
    }
    Ok(next)
}

/// Where rollout initial states come from.
pub enum Source<'a> {
    /// Constant initial states `[n, d]`.
    Values(&'a Tensor),
    /// Initial states already on the tape, one per node.
    Vars(&'a [Var]),
}

/// Predicted states and outgoing messages at every observation time, on the tape.
#[derive(Debug, Clone)]
pub struct TapedRollout {
    /// `states[t][k]`
    pub states: Vec<Vec<Var>>,
    /// `messages[t][k]`
    pub messages: Vec<Vec<Var>>,
}

impl TapedRollout {
    pub fn to_values(&self, tape: &Tape) -> Rollout {
        let stack = |rows: &[Vec<Var>]| -> Tensor {
            let t = rows.len();
            let n = rows.first().map_or(0, |r| r.len());
            let w = rows.first().and_then(|r| r.first()).map_or(0, |&v| tape.dims(v).len());
            let data: Vec<f64> = rows
                .iter()
                .flatten()
                .flat_map(|&v| tape.value(v).iter().copied())
                .collect();
            Tensor::new(vec![t, n, w], data).expect("rollout rows are rectangular")
        };
        Rollout {
            states: stack(&self.states),
            messages: stack(&self.messages),
        }
    }
}

/// Rollout values: `states: [T, n, d]`, `messages: [T, n, p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Tensor,
    pub messages: Tensor,
}

/// Roll the system forward `steps` snapshots (including the initial one).
///
/// Initial messages are zero. With `clamp_messages`, outgoing messages are
/// reset to zero after every step, which cuts all communication between nodes.
#[allow(clippy::too_many_arguments)]
pub fn rollout_taped(
    tape: &mut Tape,
    net: &TapedNet,
    graph: &GraphSpec,
    x0: Source<'_>,
    controls: Option<&Tensor>,
    steps: usize,
    dt: f64,
    clamp_messages: bool,
) -> Result<TapedRollout> {
    if steps == 0 {
        return Err(Error::InvalidParam("rollout needs at least one snapshot".into()));
    }
    let (n, d, p, c) = (
        graph.n(),
        net.config.state_dim,
        net.config.message_dim,
        net.config.control_dim,
    );
    let x_init: Vec<Var> = match x0 {
        Source::Values(t) => {
            if t.shape() != [n, d] {
                return Err(Error::dim(
                    "rollout",
                    format!("x0 shape {:?}, expected [{n}, {d}]", t.shape()),
                ));
            }
            t.data()
                .chunks_exact(d.max(1))
                .take(n)
                .map(|row| tape.constant_vector(&row[..d]))
                .collect()
        }
        Source::Vars(vs) => {
            if vs.len() != n || vs.iter().any(|&v| tape.dims(v).len() != d) {
                return Err(Error::dim("rollout", "initial state vars do not match [n, d]"));
            }
            vs.to_vec()
        }
    };
    if c > 0 {
        match controls {
            Some(u) if u.shape() == [steps, n, c] => {}
            Some(u) => {
                return Err(Error::dim(
                    "rollout",
                    format!("controls shape {:?}, expected [{steps}, {n}, {c}]", u.shape()),
                ))
            }
            None => return Err(Error::dim("rollout", "model expects controls")),
        }
    }
    let neighbors = graph.neighbor_lists();
    let zeros: Vec<Var> = (0..n).map(|_| tape.zeros(p)).collect();
    let mut state = AugmentedState {
        x: x_init,
        m: zeros.clone(),
    };
    let mut out = TapedRollout {
        states: Vec::with_capacity(steps),
        messages: Vec::with_capacity(steps),
    };
    out.states.push(state.x.clone());
    out.messages.push(state.m.clone());
    for t in 1..steps {
        let u_vars: Option<Vec<Var>> = controls.filter(|_| c > 0).map(|u| {
            let row = &u.data()[(t - 1) * n * c..t * n * c];
            row.chunks_exact(c).map(|ch| tape.constant_vector(ch)).collect()
        });
        let mut next = step_with_neighbors(tape, net, &neighbors, &state, u_vars.as_deref(), dt)
            .map_err(|e| e.with_context(format!("step {}", t - 1)))?;
        if clamp_messages {
            next.m = (0..n).map(|_| tape.zeros(p)).collect();
        }
        out.states.push(next.x.clone());
        out.messages.push(next.m.clone());
        state = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(d: usize, p: usize) -> MpNodeModel {
        MpNodeModel::new(ModelConfig::new(d, p).with_hidden(vec![8, 8]), 1)
    }

    #[test]
    fn widths() {
        let cfg = ModelConfig::new(3, 7);
        assert_eq!(cfg.input_width(), 10);
        assert_eq!(cfg.output_width(), 10);
        assert_eq!(cfg.layer_shapes(), vec![(64, 10), (64, 64), (10, 64)]);
    }

    #[test]
    fn zero_final_layer_gives_zero_output() {
        let mut m = small(2, 3);
        let last = m.layers_mut().last_mut().unwrap();
        last.weight = Tensor::zeros(last.weight.shape().to_vec());
        let mut tape = Tape::new();
        let net = m.register(&mut tape);
        let z = tape.constant_vector(&[0.3, -1.0, 2.0, 0.5, 0.1]);
        let y = mlp_forward(&mut tape, &net, z).unwrap();
        assert_eq!(tape.value(y), &[0.0; 5]);
        let bad = tape.constant_vector(&[1.0]);
        assert!(mlp_forward(&mut tape, &net, bad).is_err());
    }

    #[test]
    fn augmented_field_width() {
        let m = MpNodeModel::new(ModelConfig::new(3, 7).with_hidden(vec![4]), 0);
        let mut tape = Tape::new();
        let net = m.register(&mut tape);
        let x = tape.constant_vector(&[1.0, 2.0, 3.0]);
        let mi = tape.zeros(7);
        let f = augmented_rhs(&mut tape, &net, x, mi, None).unwrap();
        assert_eq!(tape.dims(f).len(), 10);
    }

    #[test]
    fn aggregation_cases() {
        let mut tape = Tape::new();
        let g = GraphSpec::explicit(3, vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let msgs = [
            tape.constant_vector(&[9.0, 9.0]),
            tape.constant_vector(&[1.0, 2.0]),
            tape.constant_vector(&[3.0, 4.0]),
        ];
        let a = aggregate_incoming(&mut tape, &g, &msgs, 0).unwrap();
        assert_eq!(tape.value(a), &[2.0, 3.0]);
        let iso = aggregate_incoming(&mut tape, &g, &msgs, 1).unwrap();
        assert_eq!(tape.value(iso), &[0.0, 0.0]);

        let full = GraphSpec::complete(4);
        let v: Vec<Var> = (0..4).map(|_| tape.constant_vector(&[0.1, -0.7])).collect();
        for k in 0..4 {
            let a = aggregate_incoming(&mut tape, &full, &v, k).unwrap();
            let got = tape.value(a);
            assert!((got[0] - 0.1).abs() < 1e-15 && (got[1] + 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_model_is_static() {
        let m = MpNodeModel::zeros(ModelConfig::new(2, 3).with_hidden(vec![5]));
        let g = GraphSpec::complete(3);
        let x0 = Tensor::new(vec![3, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let r = m.rollout(&g, &x0, None, 4, 0.1, false).unwrap();
        for t in 0..4 {
            assert_eq!(&r.states.data()[t * 6..(t + 1) * 6], x0.data());
        }
        assert!(r.messages.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_snapshot_rollout() {
        let m = small(3, 2);
        let g = GraphSpec::complete(2);
        let x0 = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let r = m.rollout(&g, &x0, None, 1, 0.05, false).unwrap();
        assert_eq!(r.states.data(), x0.data());
        assert_eq!(r.messages.shape(), &[1, 2, 2]);
        assert!(r.messages.data().iter().all(|&v| v == 0.0));
        assert!(m.rollout(&g, &x0, None, 0, 0.05, false).is_err());
    }

    #[test]
    fn identical_nodes_stay_identical() {
        let m = small(3, 4);
        let sym = GraphSpec::complete(3);
        let x0 = Tensor::new(vec![3, 3], [0.2, -0.3, 0.9].repeat(3)).unwrap();
        let r = m.rollout(&sym, &x0, None, 10, 0.05, false).unwrap();
        for row in r.states.data().chunks(9) {
            assert_eq!(row[0..3], row[3..6]);
            assert_eq!(row[0..3], row[6..9]);
        }
    }

    #[test]
    fn clamped_messages_are_zero() {
        let m = small(2, 3);
        let g = GraphSpec::complete(2);
        let x0 = Tensor::new(vec![2, 2], vec![0.5, -0.5, 0.1, 0.2]).unwrap();
        let r = m.rollout(&g, &x0, None, 6, 0.1, true).unwrap();
        assert!(r.messages.data().iter().all(|&v| v == 0.0));
        let free = m.rollout(&g, &x0, None, 6, 0.1, false).unwrap();
        assert!(free.messages.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn parameter_count_is_independent_of_nodes() {
        let m = small(2, 3);
        let expected: usize = m.config().layer_shapes().iter().map(|(o, i)| o * i + o).sum();
        assert_eq!(m.param_count(), expected);
    }
}
