use mpnode::ad::Tensor;
use mpnode::analysis::*;
use mpnode::datasets::{generate_dataset, split_train_val};
use mpnode::dynamics::{simulate_trajectory, LorenzParams, SystemSpec};
use mpnode::graphs::gen_fully_connected_weighted;
use mpnode::model::{Checkpoint, ModelConfig, MpNodeModel};
use mpnode::rng;
use mpnode::training::{EpochRecord, RunRecord};
use proptest::prelude::*;
use rand::Rng;

fn gaussian(r: &mut rng::Rng) -> f64 {
    let u: f64 = 1.0 - r.gen::<f64>();
    let v: f64 = r.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// `[1, samples, 1, dim]` log of i.i.d. samples drawn by `draw`.
fn log_of(samples: usize, dim: usize, mut draw: impl FnMut() -> f64) -> Tensor {
    Tensor::new(vec![1, samples, 1, dim], (0..samples * dim).map(|_| draw()).collect()).unwrap()
}

#[test]
fn isotropic_gaussian_has_flat_spectrum() {
    let mut r = rng::from_seed(4);
    let pca = pca_messages(&log_of(10_000, 4, || gaussian(&mut r)), 4).unwrap();
    for (i, v) in pca.eigenvalues.iter().enumerate() {
        assert!((v - 1.0).abs() < 0.1, "eigenvalue {i}: {v}");
    }
    for e in &pca.explained {
        assert!((e - 0.25).abs() < 0.03, "{e}");
    }
}

#[test]
fn planted_direction_is_recovered() {
    let mut r = rng::from_seed(9);
    let dir = [0.6, 0.0, -0.8];
    let mut data = Vec::new();
    for _ in 0..5000 {
        let a = 3.0 * gaussian(&mut r);
        for &c in &dir {
            data.push(a * c + 0.1 * gaussian(&mut r));
        }
    }
    let pca = pca_messages(&Tensor::new(vec![5, 1000, 1, 3], data).unwrap(), 2).unwrap();
    let dot: f64 = pca.components[0].iter().zip(dir).map(|(a, b)| a * b).sum();
    assert!(dot.abs() > 0.999, "{dot}");
    assert!(pca.explained[0] > 0.99);
    assert_eq!(pca.projections.shape(), &[5, 1000, 2]);
}

fn check_eigen(a: &[f64], n: usize) {
    let (vals, vecs) = symmetric_eigen(a, n).unwrap();
    let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for w in vals.windows(2) {
        assert!(w[0] >= w[1]);
    }
    for (i, (lambda, v)) in vals.iter().zip(&vecs).enumerate() {
        let mut res = 0.0;
        for r in 0..n {
            let av: f64 = (0..n).map(|c| a[r * n + c] * v[c]).sum();
            res += (av - lambda * v[r]).powi(2);
        }
        assert!(res.sqrt() <= 1e-8 * norm_a, "n {n} pair {i}: residual {}", res.sqrt());
        for (j, u) in vecs.iter().enumerate() {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((d - want).abs() < 1e-9, "n {n}: <v{i}, v{j}> = {d}");
        }
    }
}

#[test]
fn eigen_residuals_up_to_128() {
    for (n, seed) in [(1, 0), (2, 1), (7, 2), (32, 3), (128, 4)] {
        let mut r = rng::from_seed(seed);
        let b: Vec<f64> = (0..n * n).map(|_| gaussian(&mut r)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[i * n + k] * b[j * n + k]).sum::<f64>() / n as f64;
            }
        }
        check_eigen(&a, n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigen_of_random_symmetric(n in 1usize..9, entries in proptest::collection::vec(-3.0f64..3.0, 64)) {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                a[i * n + j] = entries[i * 8 + j];
                a[j * n + i] = entries[i * 8 + j];
            }
        }
        check_eigen(&a, n);
    }

    #[test]
    fn appending_worse_epochs_keeps_the_product(errors in proptest::collection::vec(0.001f64..10.0, 1..10), extra in 1usize..5) {
        let row = |epoch: usize, e: f64| EpochRecord { epoch, train_loss: 0.0, val_loss: None, test_error: Some(e), wall_seconds: 0.0 };
        let mut rec = RunRecord { rows: errors.iter().enumerate().map(|(i, &e)| row(i + 1, e)).collect() };
        let before = epochs_times_min_error(&rec).unwrap();
        let worst = errors.iter().cloned().fold(0.0, f64::max);
        for k in 0..extra {
            rec.rows.push(row(errors.len() + k + 1, worst + 1.0));
        }
        prop_assert_eq!(epochs_times_min_error(&rec).unwrap(), before);
    }
}

#[test]
fn epochs_times_min_error_cases() {
    let rec = |errs: &[Option<f64>]| RunRecord {
        rows: errs
            .iter()
            .enumerate()
            .map(|(i, &e)| EpochRecord {
                epoch: i + 1,
                train_loss: 1.0,
                val_loss: None,
                test_error: e,
                wall_seconds: 0.0,
            })
            .collect(),
    };
    assert_eq!(
        epochs_times_min_error(&rec(&[Some(0.5), Some(0.2), Some(0.3)])).unwrap(),
        0.4
    );
    assert_eq!(epochs_times_min_error(&rec(&[Some(0.2), Some(0.2)])).unwrap(), 0.2);
    assert_eq!(epochs_times_min_error(&rec(&[None, Some(0.1)])).unwrap(), 0.2);
    assert!(epochs_times_min_error(&rec(&[None])).is_err());
}

fn lorenz_test_set() -> mpnode::datasets::TrajectorySet {
    let g = gen_fully_connected_weighted(3, 0.01, 11).unwrap();
    let raw = generate_dataset(&SystemSpec::Lorenz(LorenzParams::default()), &[g], 8, 1.0, 0.05, 21).unwrap();
    split_train_val(&raw, 0.5, 0).unwrap().1
}

#[test]
fn ground_truth_oracle_scores_zero() {
    let set = lorenz_test_set();
    let fp = Fingerprint {
        dataset: set.fingerprint(),
        checkpoint: "oracle".into(),
        clamp_messages: false,
    };
    let (n, d) = (set.n_nodes(), set.state_dim());
    let report = evaluate_with(&set, fp, |i| {
        let truth = set.physical_trajectory(i);
        let x0 = Tensor::new(vec![n, d], truth[..n * d].to_vec())?;
        let sim = simulate_trajectory(&set.system, set.graph_of(i), &x0, 1.0, set.dt)?;
        let mse = sim.data().iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len() as f64;
        Ok((mse, mse))
    })
    .unwrap();
    assert_eq!(report.errors.len(), set.n_traj());
    assert!(report.mean < 1e-9, "{}", report.mean);
    assert!(report.diverged.is_empty());
}

#[test]
fn diverged_trajectories_are_counted_separately() {
    let set = lorenz_test_set();
    let fp = Fingerprint {
        dataset: String::new(),
        checkpoint: String::new(),
        clamp_messages: false,
    };
    let report = evaluate_with(&set, fp.clone(), |i| {
        if i == 1 {
            Err(mpnode::Error::Divergence("boom".into()))
        } else {
            Ok((i as f64, 2.0 * i as f64))
        }
    })
    .unwrap();
    assert_eq!(report.diverged, vec![1]);
    assert_eq!(report.trajectories, vec![0, 2, 3]);
    let (m, s) = mean_std(&[0.0, 2.0, 3.0]);
    assert_eq!((report.mean, report.std), (m, s));
    assert!(evaluate_with(&set, fp, |_| Err(mpnode::Error::InvalidParam("x".into()))).is_err());
}

#[test]
fn evaluate_is_deterministic_and_serializable() {
    let set = lorenz_test_set();
    let model = MpNodeModel::new(ModelConfig::new(3, 7).with_hidden(vec![16]), 3);
    let ckpt = Checkpoint::new(model, set.norm.clone());
    let a = evaluate(&ckpt, &set, false).unwrap();
    let b = evaluate(&ckpt, &set, false).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.fingerprint.checkpoint, ckpt.fingerprint());
    let clamped = evaluate(&ckpt, &set, true).unwrap();
    assert!(clamped.fingerprint.clamp_messages);
    assert_ne!(clamped.errors, a.errors);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    a.write_json(&path).unwrap();
    assert_eq!(EvalReport::read_json(&path).unwrap(), a);
}

#[test]
fn message_logs_have_expected_shape() {
    let set = lorenz_test_set();
    let model = MpNodeModel::new(ModelConfig::new(3, 5).with_hidden(vec![8]), 1);
    let ckpt = Checkpoint::new(model, set.norm.clone());
    let log = collect_messages(&ckpt, &set, false).unwrap();
    assert_eq!(log.shape(), &[set.n_traj(), set.len_time(), 3, 5]);
    assert!(log.data()[..15].iter().all(|&m| m == 0.0));
    let norms = message_norms(&log).unwrap();
    assert_eq!(norms.shape(), &[set.n_traj(), set.len_time(), 3]);
    let clamped = collect_messages(&ckpt, &set, true).unwrap();
    assert!(clamped.data().iter().all(|&m| m == 0.0));
}

#[test]
fn plot_csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let series = vec![
        Series::new("train, p=7", vec![(1.0, 0.5), (2.0, 0.25), (3.0, 1.0 / 3.0)]),
        Series::new("clamped", vec![(1.0, 2.0), (2.0, f64::NAN)]),
    ];
    let svg = dir.path().join("loss.svg");
    let csv = emit_plot(&series, &svg, "loss <train>").unwrap();
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg"));
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("&lt;train&gt;"));
    let back = read_plot_csv(&csv).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0].name, "train; p=7");
    assert_eq!(back[0].points, series[0].points);
    assert_eq!(back[1].points[0], (1.0, 2.0));
    assert!(back[1].points[1].1.is_nan());
    assert!(emit_plot(&[], dir.path().join("x.svg"), "empty").is_err());
}
