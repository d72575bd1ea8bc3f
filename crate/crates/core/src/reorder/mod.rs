//! Mode-index reordering.
//!
//! Orders start from a TSP-style path through the slices of each mode (nearby
//! slices become adjacent) and are then refined by proposing disjoint swap
//! pairs with a random-projection hash and keeping the swaps that lower the
//! model loss.

mod lsh;
mod swap;
mod tsp;

pub use lsh::{pairs_from_buckets, propose_pairs_lsh, CandidatePairSet};
pub use swap::{update_orders, Objective, DEFAULT_SAMPLE_BUDGET};
pub use tsp::{init_orders_tsp, mode_slices, order_by_metric, path_cost, MetricPath};

use crate::tensor::{increment_index, DenseTensor, PermutationSet};

/// For every position of the modes other than `mode` (row-major, reordered
/// coordinates), the offset of the corresponding original entry in `t` with
/// the `mode` coordinate left at 0.
pub(crate) fn rest_offsets(t: &DenseTensor, p: &PermutationSet, mode: usize) -> Vec<usize> {
    let rest: Vec<usize> = (0..t.order()).filter(|&k| k != mode).collect();
    let rest_dims: Vec<usize> = rest.iter().map(|&k| t.dims()[k]).collect();
    let mut pos = vec![0usize; rest.len()];
    let mut out = Vec::with_capacity(t.slice_len(mode));
    for _ in 0..t.slice_len(mode) {
        out.push(
            rest.iter()
                .zip(&pos)
                .map(|(&k, &i)| p.perm(k)[i] * t.strides()[k])
                .sum(),
        );
        increment_index(&mut pos, &rest_dims);
    }
    out
}
