//! Coupling graphs: random generators and neighbor queries.
//!
//! Adjacency is stored dense and row-major. Row `k` holds the couplings
//! flowing *into* node `k`, so `neighbors_of(k)` reads row `k`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "ER")]
    ErdosRenyi,
    #[serde(rename = "BA")]
    BarabasiAlbert,
    #[serde(rename = "WS")]
    WattsStrogatz,
    #[serde(rename = "FULL")]
    Full,
    #[serde(rename = "EXPLICIT")]
    Explicit,
}

impl Topology {
    pub fn tag(self) -> &'static str {
        match self {
            Topology::ErdosRenyi => "ER",
            Topology::BarabasiAlbert => "BA",
            Topology::WattsStrogatz => "WS",
            Topology::Full => "FULL",
            Topology::Explicit => "EXPLICIT",
        }
    }
}

/// A weighted coupling graph over `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    n: usize,
    adjacency: Vec<f64>,
    topology: Topology,
    seed: u64,
}

impl GraphSpec {
    /// Build from an explicit row-major adjacency, validating the invariants.
    pub fn explicit(n: usize, adjacency: Vec<f64>) -> Result<Self> {
        Self::with_tag(n, adjacency, Topology::Explicit, 0)
    }

    pub fn with_tag(n: usize, adjacency: Vec<f64>, topology: Topology, seed: u64) -> Result<Self> {
        if adjacency.len() != n * n {
            return Err(Error::dim(
                "GraphSpec",
                format!("{n} nodes need {} adjacency entries, got {}", n * n, adjacency.len()),
            ));
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0.0 {
                return Err(Error::InvalidParam(format!("nonzero diagonal at node {i}")));
            }
        }
        if let Some(w) = adjacency.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidParam(format!(
                "coupling weight {w} is not finite and nonnegative"
            )));
        }
        Ok(GraphSpec {
            n,
            adjacency,
            topology,
            seed,
        })
    }

    fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>, topology: Topology, seed: u64) -> Self {
        let mut adjacency = vec![0.0; n * n];
        for (i, j) in edges {
            adjacency[i * n + j] = 1.0;
            adjacency[j * n + i] = 1.0;
        }
        GraphSpec {
            n,
            adjacency,
            topology,
            seed,
        }
    }

    /// Complete unweighted graph.
    pub fn complete(n: usize) -> Self {
        Self::from_edges(
            n,
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))),
            Topology::Explicit,
            0,
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n + j]
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Incoming neighbors of node `k` with their coupling weights.
    pub fn neighbors_of(&self, k: usize) -> Result<Vec<(usize, f64)>> {
        if k >= self.n {
            return Err(Error::Index {
                op: "neighbors_of",
                index: k,
                len: self.n,
            });
        }
        Ok(self
            .row(k)
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(j, w)| (j, *w))
            .collect())
    }

    pub(crate) fn row(&self, k: usize) -> &[f64] {
        &self.adjacency[k * self.n..(k + 1) * self.n]
    }

    /// Neighbor indices of every node, in ascending order.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|k| {
                self.row(k)
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect()
    }

    pub fn degree(&self, k: usize) -> usize {
        self.row(k).iter().filter(|w| **w > 0.0).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (i + 1..self.n).all(|j| self.weight(i, j) == self.weight(j, i)))
    }

    /// Number of unordered pairs with a nonzero coupling in either direction.
    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| {
                (i + 1..self.n)
                    .filter(|&j| self.weight(i, j) > 0.0 || self.weight(j, i) > 0.0)
                    .count()
            })
            .sum()
    }

    /// Relabel nodes: new node `perm[i]` is old node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let n = self.n;
        let mut adjacency = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                adjacency[perm[i] * n + perm[j]] = self.adjacency[i * n + j];
            }
        }
        Ok(GraphSpec {
            n,
            adjacency,
            topology: self.topology,
            seed: self.seed,
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::dim(
            "permutation",
            format!("length {} for {n} nodes", perm.len()),
        ));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidParam(format!("not a permutation: {perm:?}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Each unordered pair is an edge independently with probability `p`.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<GraphSpec> {
    if n == 0 {
        return Err(Error::InvalidParam("ER graph needs n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParam(format!("ER edge probability {p} outside [0, 1]")));
    }
    let mut r = rng::from_seed(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(GraphSpec::from_edges(n, edges, Topology::ErdosRenyi, seed))
}

/// Preferential attachment grown from an `m`-node clique.
pub fn gen_barabasi_albert(n: usize, m: usize, seed: u64) -> Result<GraphSpec> {
    if m < 1 || m >= n {
        return Err(Error::InvalidParam(format!("BA needs 1 <= m < n, got m={m}, n={n}")));
    }
    let mut r = rng::from_seed(seed);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    for i in 0..m {
        for j in i + 1..m {
            edges.push((i, j));
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    for v in m..n {
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for _ in 0..m {
            let weight = |u: usize| -> usize {
                if chosen.contains(&u) {
                    0
                } else if degree[..v].iter().all(|&d| d == 0) {
                    1
                } else {
                    degree[u]
                }
            };
            let total: usize = (0..v).map(weight).sum();
            let target = if total == 0 {
                // every remaining candidate has degree zero
                let free: Vec<usize> = (0..v).filter(|u| !chosen.contains(u)).collect();
                free[r.gen_range(0..free.len())]
            } else {
                let mut pick = r.gen_range(0..total);
                let mut found = v;
                for u in 0..v {
                    let w = weight(u);
                    if pick < w {
                        found = u;
                        break;
                    }
                    pick -= w;
                }
                found
            };
            chosen.push(target);
        }
        for &u in &chosen {
            edges.push((u, v));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    Ok(GraphSpec::from_edges(n, edges, Topology::BarabasiAlbert, seed))
}

/// Ring lattice of `k` nearest neighbors with each edge rewired with probability `beta`.
pub fn gen_watts_strogatz(n: usize, k: usize, beta: f64, seed: u64) -> Result<GraphSpec> {
    if !k.is_multiple_of(2) {
        return Err(Error::InvalidParam(format!("WS k must be even, got {k}")));
    }
    if k >= n {
        return Err(Error::InvalidParam(format!("WS needs k < n, got k={k}, n={n}")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParam(format!(
            "WS rewiring probability {beta} outside [0, 1]"
        )));
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        for j in 1..=k / 2 {
            let t = (i + j) % n;
            adj[i].insert(t);
            adj[t].insert(i);
        }
    }
    let mut r = rng::from_seed(seed);
    for j in 1..=k / 2 {
        for i in 0..n {
            let t = (i + j) % n;
            if r.gen::<f64>() >= beta || !adj[i].contains(&t) {
                continue;
            }
            let candidates: Vec<usize> = (0..n).filter(|&w| w != i && !adj[i].contains(&w)).collect();
            if candidates.is_empty() {
                continue;
            }
            let w = candidates[r.gen_range(0..candidates.len())];
            adj[i].remove(&t);
            adj[t].remove(&i);
            adj[i].insert(w);
            adj[w].insert(i);
        }
    }
    let edges = adj
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().filter(move |&&j| j > i).map(move |&j| (i, j)));
    Ok(GraphSpec::from_edges(n, edges, Topology::WattsStrogatz, seed))
}

/// Dense directed coupling with off-diagonal weights `Uniform[0,1) * magnitude`.
pub fn gen_fully_connected_weighted(n: usize, magnitude: f64, seed: u64) -> Result<GraphSpec> {
    if n == 0 {
        return Err(Error::InvalidParam("graph needs n >= 1".into()));
    }
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "coupling magnitude {magnitude} must be finite and >= 0"
        )));
    }
    let mut r = rng::from_seed(seed);
    let mut adjacency = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                adjacency[i * n + j] = r.gen::<f64>() * magnitude;
            }
        }
    }
    Ok(GraphSpec {
        n,
        adjacency,
        topology: Topology::Full,
        seed,
    })
}

const FIXED_DEGREE_ATTEMPTS: usize = 1000;

/// Random simple graph in which every node has degree exactly `d`.
///
/// Edges are drawn one at a time among admissible pairs with probability
/// proportional to the product of the endpoints' remaining degrees; a dead end
/// restarts the construction.
pub fn gen_fixed_degree(n: usize, d: usize, seed: u64) -> Result<GraphSpec> {
    if d >= n {
        return Err(Error::InvalidParam(format!("degree {d} must be < n = {n}")));
    }
    if !(n * d).is_multiple_of(2) {
        return Err(Error::InvalidParam(format!(
            "n*d = {} is odd; no {d}-regular graph on {n} nodes",
            n * d
        )));
    }
    let mut r = rng::from_seed(seed);
    'attempt: for _ in 0..FIXED_DEGREE_ATTEMPTS {
        let mut residual = vec![d; n];
        let mut adjacent = vec![false; n * n];
        let mut edges = Vec::with_capacity(n * d / 2);
        while edges.len() < n * d / 2 {
            let mut pairs = Vec::new();
            let mut total = 0usize;
            for u in 0..n {
                if residual[u] == 0 {
                    continue;
                }
                for v in u + 1..n {
                    if residual[v] > 0 && !adjacent[u * n + v] {
                        let w = residual[u] * residual[v];
                        total += w;
                        pairs.push((u, v, w));
                    }
                }
            }
            if pairs.is_empty() {
                continue 'attempt;
            }
            let mut pick = r.gen_range(0..total);
            let &(u, v, _) = pairs
                .iter()
                .find(|&&(_, _, w)| {
                    if pick < w {
                        true
                    } else {
                        pick -= w;
                        false
                    }
                })
                .expect("pick < total");
            adjacent[u * n + v] = true;
            adjacent[v * n + u] = true;
            residual[u] -= 1;
            residual[v] -= 1;
            edges.push((u, v));
        }
        return Ok(GraphSpec::from_edges(n, edges, Topology::Explicit, seed));
    }
    Err(Error::InvalidParam(format!(
        "no {d}-regular graph on {n} nodes found in {FIXED_DEGREE_ATTEMPTS} attempts"
    )))
}

/// Default WS rewiring probability when a family is instantiated from a target degree.
pub const DEFAULT_WS_BETA: f64 = 0.3;

/// Instantiate a random family so its mean degree matches `degree`:
/// ER with `p = degree/(n-1)`, BA with `m` from [`ba_m_for_degree`], WS with
/// `k = degree` rounded up to even.
pub fn gen_family_with_degree(topology: Topology, n: usize, degree: usize, beta: f64, seed: u64) -> Result<GraphSpec> {
    match topology {
        Topology::ErdosRenyi => {
            let p = if n > 1 { degree as f64 / (n - 1) as f64 } else { 0.0 };
            gen_erdos_renyi(n, p.min(1.0), seed)
        }
        Topology::BarabasiAlbert => gen_barabasi_albert(n, ba_m_for_degree(n, degree), seed),
        Topology::WattsStrogatz => gen_watts_strogatz(n, degree + degree % 2, beta, seed),
        Topology::Full | Topology::Explicit => Err(Error::InvalidParam(format!(
            "{} is not a degree-parameterized family",
            topology.tag()
        ))),
    }
}

/// The `m` whose BA graph on `n` nodes has mean degree closest to `degree`.
/// A BA graph grown from an `m`-clique has `m(m-1)/2 + (n-m)m` edges.
pub fn ba_m_for_degree(n: usize, degree: usize) -> usize {
    let mean = |m: usize| (m * (m - 1) + 2 * (n - m) * m) as f64 / n as f64;
    (1..n.max(2))
        .min_by(|&a, &b| {
            (mean(a) - degree as f64)
                .abs()
                .total_cmp(&(mean(b) - degree as f64).abs())
        })
        .unwrap_or(1)
}

/// Uniform random permutation, handy for relabelling experiments.
pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::from_seed(seed));
    p
}
