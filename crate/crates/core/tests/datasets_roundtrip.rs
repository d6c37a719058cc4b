use std::fs;

use mpnode::datasets::*;
use mpnode::dynamics::{GeneParams, LorenzParams, PendulumParams, SystemSpec};
use mpnode::graphs::{gen_barabasi_albert, gen_fully_connected_weighted, GraphSpec};
use mpnode::Error;
use proptest::prelude::*;

fn lorenz_set(n_traj: usize, seed: u64) -> TrajectorySet {
    let g = gen_fully_connected_weighted(3, 0.01, 11).unwrap();
    generate_dataset(
        &SystemSpec::Lorenz(LorenzParams::default()),
        &[g],
        n_traj,
        0.5,
        0.05,
        seed,
    )
    .unwrap()
}

#[test]
fn save_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let gs: Vec<GraphSpec> = (0..3).map(|s| gen_barabasi_albert(8, 3, s).unwrap()).collect();
    let raw = generate_dataset(&SystemSpec::Gene(GeneParams::standard(8)), &gs, 7, 1.0, 0.1, 5).unwrap();
    let (train, _) = split_train_val(&raw, 0.7, 1).unwrap();
    for (name, ts) in [("raw", &raw), ("normalized", &train)] {
        let path = dir.path().join(name);
        save_dataset(ts, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(&back, ts);
        assert_eq!(back.fingerprint(), ts.fingerprint());
    }
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(lorenz_set(4, 9), lorenz_set(4, 9));
    assert_ne!(lorenz_set(4, 9).data, lorenz_set(4, 10).data);
}

#[test]
fn truncated_data_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&lorenz_set(2, 0), dir.path()).unwrap();
    let bin = dir.path().join("data.bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn unknown_kind_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&lorenz_set(2, 0), dir.path()).unwrap();
    let mpath = dir.path().join("manifest.json");
    let text = fs::read_to_string(&mpath).unwrap().replace("\"lorenz\"", "\"rossler\"");
    fs::write(&mpath, text).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Unsupported(_))));
}

#[test]
fn split_is_disjoint_and_exhaustive() {
    let raw = lorenz_set(10, 3);
    let (tr, va) = split_train_val(&raw, 0.7, 4).unwrap();
    assert_eq!((tr.n_traj(), va.n_traj()), (7, 3));
    let norm = tr.norm.clone().unwrap();
    let mut seen = [false; 10];
    for part in [&tr, &va] {
        let phys = zscore_invert(part, &norm).unwrap();
        for i in 0..part.n_traj() {
            let j = (0..10)
                .find(|&j| {
                    raw.trajectory(j)
                        .iter()
                        .zip(phys.trajectory(i))
                        .all(|(a, b)| (a - b).abs() < 1e-9)
                })
                .expect("every split trajectory comes from the source");
            assert!(!seen[j], "trajectory {j} appears twice");
            seen[j] = true;
        }
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn normalization_statistics() {
    let (tr, va) = split_train_val(&lorenz_set(12, 8), 0.5, 2).unwrap();
    let norm = tr.norm.clone().unwrap();
    assert_eq!(va.norm.as_ref(), Some(&norm));
    let d = 3;
    let values = tr.data.data();
    let count = (values.len() / d) as f64;
    for k in 0..d {
        let mean: f64 = values.iter().skip(k).step_by(d).sum::<f64>() / count;
        let var: f64 = values
            .iter()
            .skip(k)
            .step_by(d)
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / (count - 1.0);
        assert!(mean.abs() < 1e-10, "dim {k} mean {mean}");
        assert!((var - 1.0).abs() < 1e-10, "dim {k} var {var}");
    }
}

#[test]
fn pendulum_initial_states_in_range() {
    let sys = SystemSpec::Pendulum(PendulumParams::default());
    for seed in 0..20 {
        let x = sample_initial_states(&sys, 2, seed);
        for node in x.data().chunks(2) {
            assert!(node[0].abs() < std::f64::consts::FRAC_PI_2);
            assert!(node[1].abs() <= 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zscore_roundtrip(seed: u64, n_traj in 2usize..6) {
        let raw = lorenz_set(n_traj, seed);
        let norm = zscore_fit(&raw).unwrap();
        let back = zscore_invert(&zscore_apply(&raw, &norm).unwrap(), &norm).unwrap();
        for (a, b) in raw.data.data().iter().zip(back.data.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
