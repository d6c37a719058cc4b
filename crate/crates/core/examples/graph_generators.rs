//! Random graph families used for topology transfer, with their degree statistics.

use mpnode::graphs::{gen_family_with_degree, gen_fixed_degree, GraphSpec, Topology};

fn describe(name: &str, g: &GraphSpec) {
    let degrees: Vec<usize> = (0..g.n()).map(|k| g.degree(k)).collect();
    let mean = degrees.iter().sum::<usize>() as f64 / g.n() as f64;
    println!(
        "{name:>14}: n={} edges={} mean degree {mean:.2} (min {}, max {})",
        g.n(),
        g.edge_count(),
        degrees.iter().min().unwrap(),
        degrees.iter().max().unwrap()
    );
}

fn main() -> mpnode::Result<()> {
    for (n, degree) in [(10, 5), (16, 8), (64, 32)] {
        println!("target mean degree {degree} on {n} nodes");
        for topo in [Topology::ErdosRenyi, Topology::BarabasiAlbert, Topology::WattsStrogatz] {
            describe(topo.tag(), &gen_family_with_degree(topo, n, degree, 0.3, 42)?);
        }
        describe("fixed degree", &gen_fixed_degree(n, degree, 42)?);
    }
    Ok(())
}
