//! Swap-pair proposals from a random 1-D projection of the slices.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::rest_offsets;
use crate::rng::rng_for;
use crate::tensor::{DenseTensor, PermutationSet};

/// Disjoint pairs of reordered positions along one mode, each stored as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePairSet {
    pub mode: usize,
    pub pairs: Vec<(usize, usize)>,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Proposes swap pairs for `mode` of the reordered tensor `t` under `p`.
///
/// One position is sampled from each couple `(2j, 2j+1)`; the sampled slices
/// are projected onto a Gaussian direction and hashed into `max(1, N/8)`
/// equal-width buckets. Two sampled positions in the same bucket `i1, i2`
/// yield the pairs `(i1, i2^1)` and `(i1^1, i2)`.
pub fn propose_pairs_lsh(t: &DenseTensor, p: &PermutationSet, mode: usize, seed: u64) -> CandidatePairSet {
    let n = t.dims()[mode];
    if n < 2 {
        return CandidatePairSet { mode, pairs: Vec::new() };
    }
    let mut rng = rng_for(seed, &[mode as u64]);
    let sampled: Vec<usize> = (0..n)
        .step_by(2)
        .map(|i| if i + 1 < n && rng.random::<bool>() { i + 1 } else { i })
        .collect();

    let direction: Vec<f64> = (0..t.slice_len(mode)).map(|_| StandardNormal.sample(&mut rng)).collect();
    let dir_norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    let offsets = rest_offsets(t, p, mode);
    let stride = t.strides()[mode];
    let values = t.values();
    let projections: Vec<f64> = sampled
        .iter()
        .map(|&s| {
            let base = p.perm(mode)[s] * stride;
            let (mut dot, mut norm2) = (0.0, 0.0);
            for (&off, &r) in offsets.iter().zip(&direction) {
                let v = values[base + off];
                dot += v * r;
                norm2 += v * v;
            }
            if norm2 == 0.0 || dir_norm == 0.0 {
                0.0
            } else {
                dot / (dir_norm * norm2.sqrt())
            }
        })
        .collect();

    let num_buckets = (n / 8).max(1);
    let lo = projections.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = projections.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / num_buckets as f64).max(1e-12);
    let mut buckets = vec![Vec::new(); num_buckets];
    for (&s, &proj) in sampled.iter().zip(&projections) {
        let b = (((proj - lo) / width) as usize).min(num_buckets - 1);
        buckets[b].push(s);
    }
    CandidatePairSet {
        mode,
        pairs: pairs_from_buckets(buckets, n, &mut rng),
    }
}

/// Turns buckets of sampled positions into disjoint pairs. Positions whose
/// couple partner `i^1` is out of range, leftovers of odd-sized buckets and
/// their partners are paired at random.
pub fn pairs_from_buckets(mut buckets: Vec<Vec<usize>>, n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut pool = Vec::new();
    for bucket in &mut buckets {
        bucket.retain(|&i| {
            let keep = (i ^ 1) < n;
            if !keep && i < n {
                pool.push(i);
            }
            keep
        });
        bucket.shuffle(rng);
        while bucket.len() >= 2 {
            let i1 = bucket.pop().unwrap();
            let i2 = bucket.pop().unwrap();
            pairs.push(ordered(i1, i2 ^ 1));
            pairs.push(ordered(i1 ^ 1, i2));
        }
        if let Some(i) = bucket.pop() {
            pool.push(i);
            pool.push(i ^ 1);
        }
    }
    pool.shuffle(rng);
    pairs.extend(pool.chunks_exact(2).map(|c| ordered(c[0], c[1])));
    pairs
}
