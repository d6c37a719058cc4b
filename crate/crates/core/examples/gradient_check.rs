//! Compare reverse-mode gradients of a short rollout against central finite differences.

use mpnode::ad::{finite_diff_check, Tensor, Var};
use mpnode::graphs::gen_erdos_renyi;
use mpnode::model::{rollout_taped, ModelConfig, MpNodeModel, Source, TapedNet};

fn main() -> mpnode::Result<()> {
    for (d, p, n) in [(1, 0, 1), (2, 1, 2), (3, 3, 4)] {
        let model = MpNodeModel::new(ModelConfig::new(d, p).with_hidden(vec![8, 8]), 1);
        let graph = gen_erdos_renyi(n, 0.7, 2)?;
        let x0 = Tensor::new(vec![n, d], (0..n * d).map(|i| (i as f64 * 0.37 + 0.5).sin()).collect())?;
        let cfg = model.config().clone();
        let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
        let err = finite_diff_check(
            |tape, vars| {
                let net = TapedNet::from_vars(tape, cfg.clone(), vars)?;
                let r = rollout_taped(tape, &net, &graph, Source::Values(&x0), None, 6, 0.1, false)?;
                let flat: Vec<Var> = r.states.iter().flatten().copied().collect();
                let all = tape.concat(&flat)?;
                let sq = tape.square(all);
                Ok(tape.sum(sq))
            },
            &params,
            // Large enough that rounding in the loss does not swamp small components.
            1e-4,
        )?;
        println!(
            "d={d} p={p} n={n}: {} params, max relative error {err:.2e}",
            model.param_count()
        );
    }
    Ok(())
}
