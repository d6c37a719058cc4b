//! Pretrain on Lorenz3, then compare finetuning against training from scratch on 50 Lorenz10 trajectories.

use mpnode::analysis::epochs_times_min_error;
use mpnode::datasets::{generate_dataset, split_train_val};
use mpnode::dynamics::{LorenzParams, SystemSpec};
use mpnode::graphs::gen_fully_connected_weighted;
use mpnode::model::{ModelConfig, MpNodeModel};
use mpnode::training::{finetune, train, LossKind, TrainConfig};

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
    let fresh = || MpNodeModel::new(ModelConfig::new(3, 7).with_hidden(vec![32, 32]), 4);
    let cfg = |epochs| TrainConfig {
        lr: 3e-3,
        batch_size: 32,
        epochs,
        loss: LossKind::HuberTime,
        horizon: Some(11),
        ..TrainConfig::default()
    };

    let (tr3, va3) = split_train_val(&lorenz(3, 130, 1)?, 100.0 / 130.0, 2)?;
    let pre = train(fresh(), &tr3, Some(&va3), None, &cfg(100))?.into_result()?;

    let (tr, te) = split_train_val(&lorenz(10, 70, 9)?, 50.0 / 70.0, 3)?;
    let ft = finetune(&pre.checkpoint, &tr, Some(&te), Some(&te), &cfg(60))?.into_result()?;
    let scratch = train(fresh(), &tr, Some(&te), Some(&te), &cfg(60))?.into_result()?;
    for (name, rec) in [("finetuned", &ft.record), ("scratch", &scratch.record)] {
        println!(
            "{name:>9}: min test error {:.4}, epochs x min error {:.3}",
            rec.best_test_error().unwrap(),
            epochs_times_min_error(rec)?
        );
    }
    Ok(())
}
