//! Order initialization via the MST 2-approximation of metric TSP.

use rand::Rng;

use crate::rng::rng_for;
use crate::tensor::{DenseTensor, PermutationSet};

/// A Hamiltonian path through the nodes and the weight of the MST it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPath {
    pub order: Vec<usize>,
    pub mst_weight: f64,
}

/// All slices of `t` along `mode`, each flattened row-major.
pub fn mode_slices(t: &DenseTensor, mode: usize) -> Vec<Vec<f64>> {
    (0..t.dims()[mode])
        .map(|i| t.slice_values(mode, i).expect("index in range"))
        .collect()
}

fn frobenius_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `Σ_i dist(order[i], order[i+1])`.
pub fn path_cost(order: &[usize], mut dist: impl FnMut(usize, usize) -> f64) -> f64 {
    order.windows(2).map(|w| dist(w[0], w[1])).sum()
}

/// Builds a path through `n` nodes of a metric: Prim's MST from `root`, DFS
/// preorder as a closed tour, then the heaviest tour edge is cut.
///
/// Among equal keys the smallest node index is extracted first, and a node's
/// parent only changes to a strictly closer node or an equally close node with
/// a smaller index. Children are visited in ascending order.
pub fn order_by_metric(n: usize, mut dist: impl FnMut(usize, usize) -> f64, root: usize) -> MetricPath {
    if n <= 1 {
        return MetricPath {
            order: (0..n).collect(),
            mst_weight: 0.0,
        };
    }
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut mst_weight = 0.0;
    key[root] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || key[v] < key[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            children[parent[u]].push(u);
            mst_weight += key[u];
        }
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = dist(u, v);
            if w < key[v] || (w == key[v] && u < parent[v]) {
                key[v] = w;
                parent[v] = u;
            }
        }
    }
    let mut tour = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        tour.push(u);
        children[u].sort_unstable();
        stack.extend(children[u].iter().rev());
    }
    let mut cut = 0;
    let mut heaviest = f64::NEG_INFINITY;
    for j in 0..n {
        let w = dist(tour[j], tour[(j + 1) % n]);
        if w > heaviest {
            heaviest = w;
            cut = j;
        }
    }
    let mut order = tour[cut + 1..].to_vec();
    order.extend_from_slice(&tour[..=cut]);
    MetricPath { order, mst_weight }
}

/// Initial orderings: for every mode, a path through its slices under the
/// Frobenius distance. `π_k(i)` is the `i`-th slice on the path.
pub fn init_orders_tsp(t: &DenseTensor, seed: u64) -> PermutationSet {
    let perms = (0..t.order())
        .map(|k| {
            let n = t.dims()[k];
            if n == 1 {
                return vec![0];
            }
            let slices = mode_slices(t, k);
            let root = rng_for(seed, &[k as u64]).random_range(0..n);
            order_by_metric(n, |a, b| frobenius_distance(&slices[a], &slices[b]), root).order
        })
        .collect();
    PermutationSet::new(perms).expect("paths visit every node once")
}
