//! Simulate each ground-truth system once and print a few snapshots.

use mpnode::datasets::{kuramoto_frequencies, sample_initial_states};
use mpnode::dynamics::{simulate_trajectory, GeneParams, KuramotoParams, LorenzParams, PendulumParams, SystemSpec};
use mpnode::graphs::{gen_barabasi_albert, gen_fully_connected_weighted, GraphSpec};

fn main() -> mpnode::Result<()> {
    let cases = [
        (
            "coupled pendulum",
            SystemSpec::Pendulum(PendulumParams::default()),
            GraphSpec::complete(2),
            10.0,
            0.1,
        ),
        (
            "lorenz3, low coupling",
            SystemSpec::Lorenz(LorenzParams::default()),
            gen_fully_connected_weighted(3, 0.01, 11)?,
            2.5,
            0.05,
        ),
        (
            "gene regulation (BA, n=16)",
            SystemSpec::Gene(GeneParams::standard(16)),
            gen_barabasi_albert(16, 5, 0)?,
            5.0,
            0.1,
        ),
        (
            "kuramoto10 (BA)",
            SystemSpec::Kuramoto(KuramotoParams {
                b: kuramoto_frequencies(10, 7),
            }),
            gen_barabasi_albert(10, 3, 0)?,
            5.0,
            0.05,
        ),
    ];
    for (name, sys, graph, horizon, dt) in cases {
        let x0 = sample_initial_states(&sys, graph.n(), 1);
        let traj = simulate_trajectory(&sys, &graph, &x0, horizon, dt)?;
        let (t, n, d) = (traj.shape()[0], traj.shape()[1], traj.shape()[2]);
        println!("{name}: {t} snapshots x {n} nodes x {d} dims");
        for step in [0, t / 2, t - 1] {
            let node0 = &traj.data()[step * n * d..step * n * d + d];
            println!("  t={:5.2}  node 0 = {node0:.3?}", step as f64 * dt);
        }
    }
    Ok(())
}
