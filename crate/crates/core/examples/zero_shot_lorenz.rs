//! Train on three weakly coupled Lorenz attractors, then run the same module on 7 and 10 nodes.

use mpnode::analysis::evaluate;
use mpnode::datasets::{generate_dataset, split_train_val};
use mpnode::dynamics::{LorenzParams, SystemSpec};
use mpnode::graphs::gen_fully_connected_weighted;
use mpnode::model::{ModelConfig, MpNodeModel};
use mpnode::training::{train, LossKind, TrainConfig};

fn main() -> mpnode::Result<()> {
    let sys = SystemSpec::Lorenz(LorenzParams::default());
    let lorenz = |n: usize, n_traj: usize, seed: u64| {
        generate_dataset(
            &sys,
            &[gen_fully_connected_weighted(n, 0.01, 11)?],
            n_traj,
            2.5,
            0.05,
            seed,
        )
    };
    let (tr, te) = split_train_val(&lorenz(3, 130, 1)?, 100.0 / 130.0, 2)?;
    let model = MpNodeModel::new(ModelConfig::new(3, 7).with_hidden(vec![32, 32]), 4);
    let cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 32,
        epochs: 100,
        loss: LossKind::HuberTime,
        horizon: Some(11),
        ..TrainConfig::default()
    };
    let out = train(model, &tr, Some(&te), None, &cfg)?.into_result()?;
    let base = evaluate(&out.checkpoint, &te, false)?;
    println!(
        "lorenz3  normalized test MSE {:.4} ± {:.4}",
        base.normalized_mean, base.normalized_std
    );
    for n in [7, 10] {
        let rep = evaluate(&out.checkpoint, &lorenz(n, 30, 50 + n as u64)?, false)?;
        println!(
            "lorenz{n:<2} normalized test MSE {:.4} ± {:.4} ({:.2}x, {} diverged)",
            rep.normalized_mean,
            rep.normalized_std,
            rep.normalized_mean / base.normalized_mean,
            rep.diverged_count()
        );
    }
    Ok(())
}
