use mpnode::ad::{finite_diff_check, Tape, Tensor, Var};
use mpnode::graphs::GraphSpec;
use mpnode::model::{mlp_forward, rollout_taped, ModelConfig, MpNodeModel, Source, TapedNet};
use mpnode::Result;
use proptest::prelude::*;

const TOL: f64 = 1e-4;

fn v(xs: &[f64]) -> Tensor {
    Tensor::vector(xs.to_vec())
}

fn check<F>(f: F, params: &[Tensor]) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    finite_diff_check(f, params, 1e-6).unwrap()
}

/// Weighted sum so every output component gets a distinct adjoint.
fn weighted(t: &mut Tape, x: Var) -> Result<Var> {
    let n = t.dims(x).len();
    let w: Vec<f64> = (0..n).map(|i| 0.3 + 0.7 * i as f64).collect();
    let c = t.constant_vector(&w);
    let p = t.mul(x, c)?;
    Ok(t.sum(p))
}

#[test]
fn matvec() {
    let w = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7]).unwrap();
    let err = check(
        |t, p| {
            let y = t.matvec(p[0], p[1])?;
            weighted(t, y)
        },
        &[w, v(&[1.0, -2.0, 0.5])],
    );
    assert!(err < TOL, "{err}");
}

#[test]
fn binary_ops() {
    let a = v(&[0.4, -1.3, 2.2]);
    let b = v(&[1.1, 0.7, -0.2]);
    for op in 0..4 {
        let err = check(
            |t, p| {
                let y = match op {
                    0 => t.add(p[0], p[1])?,
                    1 => t.sub(p[0], p[1])?,
                    2 => t.mul(p[0], p[1])?,
                    _ => t.axpy(p[0], -0.8, p[1])?,
                };
                weighted(t, y)
            },
            &[a.clone(), b.clone()],
        );
        assert!(err < TOL, "op {op}: {err}");
    }
}

#[test]
fn unary_ops() {
    let a = v(&[0.4, -1.3, 2.2, -0.05]);
    for op in 0..5 {
        let err = check(
            |t, p| {
                let y = match op {
                    0 => t.scale(p[0], -2.5),
                    1 => t.tanh(p[0]),
                    2 => t.relu(p[0]),
                    3 => t.square(p[0]),
                    _ => t.huber(p[0], 1.0)?,
                };
                weighted(t, y)
            },
            std::slice::from_ref(&a),
        );
        assert!(err < TOL, "op {op}: {err}");
    }
}

#[test]
fn structural_ops() {
    let a = v(&[0.4, -1.3]);
    let b = v(&[2.0, 0.1, -0.6]);
    let c = v(&[-1.0, 0.25]);
    let err = check(
        |t, p| {
            let cat = t.concat(&[p[0], p[1]])?;
            let s = t.slice(cat, 1, 4)?;
            weighted(t, s)
        },
        &[a.clone(), b.clone()],
    );
    assert!(err < TOL, "concat/slice: {err}");
    let err = check(
        |t, p| {
            let m = t.mean(&[p[0], p[1], p[0]])?;
            weighted(t, m)
        },
        &[a.clone(), c.clone()],
    );
    assert!(err < TOL, "mean: {err}");
    let err = check(
        |t, p| {
            let s = t.sum(p[0]);
            let q = t.square(s);
            Ok(t.sum(q))
        },
        &[b],
    );
    assert!(err < TOL, "sum: {err}");
}

#[test]
fn mlp_gradient() {
    let model = MpNodeModel::new(ModelConfig::new(2, 3).with_hidden(vec![6, 5]), 4);
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let cfg = model.config().clone();
    let err = check(
        |t, p| {
            let net = net_from(&cfg, t, p);
            let z = t.constant_vector(&[0.3, -0.2, 0.9, 0.0, -1.1]);
            let y = mlp_forward(t, &net, z)?;
            weighted(t, y)
        },
        &params,
    );
    assert!(err < TOL, "{err}");
}

/// Rebuild a taped net from leaves the gradient checker created.
fn net_from(cfg: &ModelConfig, t: &mut Tape, p: &[Var]) -> TapedNet {
    TapedNet::from_vars(t, cfg.clone(), p).unwrap()
}

fn rollout_loss(cfg: &ModelConfig, g: &GraphSpec, x0: &Tensor, t: &mut Tape, p: &[Var]) -> Result<Var> {
    let net = net_from(cfg, t, p);
    let r = rollout_taped(t, &net, g, Source::Values(x0), None, 6, 0.1, false)?;
    let flat: Vec<Var> = r.states.iter().flatten().copied().collect();
    let all = t.concat(&flat)?;
    let sq = t.square(all);
    Ok(t.sum(sq))
}

#[test]
fn five_step_rollout_gradient() {
    let model = MpNodeModel::new(ModelConfig::new(2, 3).with_hidden(vec![8]), 9);
    let cfg = model.config().clone();
    let g = GraphSpec::complete(3);
    let x0 = Tensor::new(vec![3, 2], vec![0.2, -0.5, 1.0, 0.3, -0.8, 0.1]).unwrap();
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let err = check(|t, p| rollout_loss(&cfg, &g, &x0, t, p), &params);
    assert!(err < TOL, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_elementwise_chains(xs in proptest::collection::vec(-2.0f64..2.0, 1..6)) {
        let err = check(
            |t, p| {
                let a = t.tanh(p[0]);
                let b = t.mul(a, p[0])?;
                let c = t.axpy(b, 0.5, p[0])?;
                weighted(t, c)
            },
            &[v(&xs)],
        );
        prop_assert!(err < TOL, "{}", err);
    }
}
