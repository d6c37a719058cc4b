//! Train on coupled pendulums with and without message passing and compare the loss curves.
//!
//! Writes `ablation.svg` (and `ablation.csv`) into the current directory.

use mpnode::analysis::{emit_plot, Series};
use mpnode::datasets::{generate_dataset, split_train_val};
use mpnode::dynamics::{PendulumParams, SystemSpec};
use mpnode::graphs::GraphSpec;
use mpnode::model::{ModelConfig, MpNodeModel};
use mpnode::training::{train, TrainConfig};

fn main() -> mpnode::Result<()> {
    let sys = SystemSpec::Pendulum(PendulumParams::default());
    let raw = generate_dataset(&sys, &[GraphSpec::complete(2)], 200, 10.0, 0.1, 1)?;
    let (tr, va) = split_train_val(&raw, 0.7, 2)?;
    let mut curves = Vec::new();
    for clamp in [false, true] {
        let model = MpNodeModel::new(ModelConfig::new(2, 7).with_hidden(vec![16, 16]), 3);
        let cfg = TrainConfig {
            lr: 3e-3,
            batch_size: 32,
            epochs: 20,
            horizon: Some(11),
            clamp_messages: clamp,
            ..TrainConfig::default()
        };
        let out = train(model, &tr, Some(&va), None, &cfg)?.into_result()?;
        let label = if clamp { "clamped" } else { "messages" };
        println!(
            "{label:>9}: final training loss {:.4}",
            out.record.final_train_loss().unwrap()
        );
        curves.push(Series::new(
            label,
            out.record.rows.iter().map(|r| (r.epoch as f64, r.train_loss)).collect(),
        ));
    }
    emit_plot(&curves, "ablation.svg", "pendulum training loss")?;
    Ok(())
}
