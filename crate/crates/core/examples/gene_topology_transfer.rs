//! Train gene-regulation dynamics on five Barabási–Albert graphs, evaluate on unseen ER and WS graphs.

use mpnode::analysis::evaluate;
use mpnode::datasets::{generate_dataset, split_train_val};
use mpnode::dynamics::{GeneParams, SystemSpec};
use mpnode::graphs::{gen_family_with_degree, GraphSpec, Topology};
use mpnode::model::{ModelConfig, MpNodeModel};
use mpnode::training::{train, TrainConfig};

fn main() -> mpnode::Result<()> {
    let n = 16;
    let sys = SystemSpec::Gene(GeneParams::standard(n));
    let ba: Vec<GraphSpec> = (0..5)
        .map(|s| gen_family_with_degree(Topology::BarabasiAlbert, n, 8, 0.0, s))
        .collect::<mpnode::Result<_>>()?;
    let (tr, te) = split_train_val(&generate_dataset(&sys, &ba, 200, 5.0, 0.1, 1)?, 0.7, 2)?;
    let model = MpNodeModel::new(ModelConfig::new(1, 7).with_hidden(vec![16, 16]), 5);
    let cfg = TrainConfig {
        lr: 3e-3,
        batch_size: 32,
        epochs: 40,
        horizon: Some(11),
        ..TrainConfig::default()
    };
    let out = train(model, &tr, Some(&te), None, &cfg)?.into_result()?;

    let seen = evaluate(&out.checkpoint, &te, false)?;
    println!("BA (seen)  test MSE {:.4} ± {:.4}", seen.mean, seen.std);
    for topo in [Topology::ErdosRenyi, Topology::WattsStrogatz] {
        let g = gen_family_with_degree(topo, n, 8, 0.3, 100)?;
        let rep = evaluate(&out.checkpoint, &generate_dataset(&sys, &[g], 60, 5.0, 0.1, 77)?, false)?;
        println!("{:<10} test MSE {:.4} ± {:.4}", topo.tag(), rep.mean, rep.std);
    }
    Ok(())
}
