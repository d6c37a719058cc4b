//! Generate a normalized train/val split, write it to disk and read it back.
//!
//! Usage: `cargo run --example dataset_io [DIR]` (defaults to a temporary directory).

use mpnode::datasets::{generate_dataset, kuramoto_frequencies, load_dataset, save_dataset, split_train_val};
use mpnode::dynamics::{KuramotoParams, SystemSpec};
use mpnode::graphs::gen_watts_strogatz;

fn main() -> mpnode::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("mpnode-dataset-io"), Into::into);
    let sys = SystemSpec::Kuramoto(KuramotoParams {
        b: kuramoto_frequencies(10, 7),
    });
    let raw = generate_dataset(&sys, &[gen_watts_strogatz(10, 6, 0.3, 1)?], 50, 5.0, 0.05, 1)?;
    let (train, val) = split_train_val(&raw, 0.7, 2)?;
    let norm = train.norm.as_ref().expect("split normalizes");
    println!(
        "phase mean {:.4}, std {:.4} (fitted on {} trajectories)",
        norm.mean[0],
        norm.std[0],
        train.n_traj()
    );

    for (name, set) in [("train", &train), ("val", &val)] {
        let path = dir.join(name);
        save_dataset(set, &path)?;
        let back = load_dataset(&path)?;
        assert_eq!(&back, set);
        println!(
            "{name}: {} trajectories -> {} (fingerprint {})",
            set.n_traj(),
            path.display(),
            &back.fingerprint()[..12]
        );
    }
    Ok(())
}
