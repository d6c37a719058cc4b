//! Principal components of the messages a trained Kuramoto model exchanges.

use mpnode::analysis::{collect_messages, pca_messages};
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
    let (tr, va) = split_train_val(&generate_dataset(&sys, &[g], 100, 5.0, 0.05, 1)?, 0.7, 2)?;
    let model = MpNodeModel::new(ModelConfig::new(1, 7).with_hidden(vec![16, 16]), 6);
    let cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 32,
        epochs: 10,
        loss: LossKind::HuberTime,
        horizon: Some(11),
        ..TrainConfig::default()
    };
    let out = train(model, &tr, Some(&va), None, &cfg)?.into_result()?;

    let log = collect_messages(&out.checkpoint, &va, false)?;
    let pca = pca_messages(&log, 3)?;
    println!("message log {:?} (traj, T, nodes, p)", log.shape());
    for (i, (val, frac)) in pca.eigenvalues.iter().zip(&pca.explained).enumerate() {
        println!("PC{}: eigenvalue {val:.4e}, explained {:.1}%", i + 1, 100.0 * frac);
    }
    Ok(())
}
