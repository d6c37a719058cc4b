//! Best test error on Kuramoto10 as a function of the message size.

use mpnode::datasets::{generate_dataset, kuramoto_frequencies, split_train_val};
use mpnode::dynamics::{KuramotoParams, SystemSpec};
use mpnode::graphs::{gen_family_with_degree, Topology};
use mpnode::model::{ModelConfig, MpNodeModel};
use mpnode::training::{train, LossKind, TrainConfig};

fn main() -> mpnode::Result<()> {
    let sys = SystemSpec::Kuramoto(KuramotoParams {
        b: kuramoto_frequencies(10, 7),
    });
    let g = gen_family_with_degree(Topology::BarabasiAlbert, 10, 5, 0.0, 3)?;
    let (tr, va) = split_train_val(&generate_dataset(&sys, &[g], 200, 5.0, 0.05, 1)?, 0.7, 2)?;
    for p in [1, 3, 7, 13] {
        let model = MpNodeModel::new(ModelConfig::new(1, p).with_hidden(vec![16, 16]), 6);
        let cfg = TrainConfig {
            lr: 3e-3,
            batch_size: 32,
            epochs: 20,
            loss: LossKind::HuberTime,
            horizon: Some(11),
            ..TrainConfig::default()
        };
        let out = train(model, &tr, Some(&va), Some(&va), &cfg)?.into_result()?;
        println!("p={p:<2} best test error {:.4}", out.record.best_test_error().unwrap());
    }
    Ok(())
}
