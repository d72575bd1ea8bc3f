//! Synthetic tensors for tests and benchmarks.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nttd::generate_random_nttd_tensor;
use crate::tensor::{DenseTensor, PermutationSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// i.i.d. uniform values in `[0, 1)`.
    Random,
    /// Outer product of one smooth positive vector per mode.
    Rank1,
    /// A sum of a few plane waves over the normalized coordinates.
    Smooth,
    /// A smooth tensor with every mode shuffled.
    Shuffled,
    /// Output of a randomly initialized NTTD model with `R = h = 5`.
    Nttd,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "random" => SynthKind::Random,
            "rank1" => SynthKind::Rank1,
            "smooth" => SynthKind::Smooth,
            "shuffled" => SynthKind::Shuffled,
            "nttd" => SynthKind::Nttd,
            other => return Err(Error::Argument(format!("unknown synthetic kind {other:?}"))),
        })
    }
}

pub fn generate(kind: SynthKind, dims: &[usize], seed: u64) -> Result<DenseTensor> {
    match kind {
        SynthKind::Random => random_uniform(dims, seed),
        SynthKind::Rank1 => rank1(dims, seed),
        SynthKind::Smooth => smooth(dims, seed),
        SynthKind::Shuffled => Ok(shuffled(&smooth(dims, seed)?, seed ^ 0x5eed).0),
        SynthKind::Nttd => generate_random_nttd_tensor(5, 5, dims, seed),
    }
}

pub fn random_uniform(dims: &[usize], seed: u64) -> Result<DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseTensor::from_fn(dims, |_| rng.random::<f64>())
}

pub fn rank1(dims: &[usize], seed: u64) -> Result<DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<Vec<f64>> = dims
        .iter()
        .map(|&n| {
            let freq = rng.random_range(0.5..2.0);
            let phase = rng.random_range(0.0..TAU);
            (0..n)
                .map(|i| 1.0 + 0.5 * (TAU * freq * i as f64 / n as f64 + phase).sin())
                .collect()
        })
        .collect();
    DenseTensor::from_fn(dims, |idx| idx.iter().zip(&vectors).map(|(&i, v)| v[i]).product())
}

pub fn smooth(dims: &[usize], seed: u64) -> Result<DenseTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let freqs = dims.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
            (freqs, rng.random_range(0.0..TAU), rng.random_range(0.5..1.5))
        })
        .collect();
    DenseTensor::from_fn(dims, |idx| {
        waves
            .iter()
            .map(|(freqs, phase, amp)| {
                let arg: f64 = idx
                    .iter()
                    .zip(dims)
                    .zip(freqs)
                    .map(|((&i, &n), f)| f * i as f64 / n as f64)
                    .sum();
                amp * (TAU * arg + phase).sin()
            })
            .sum()
    })
}

/// Applies uniformly random orderings; returns the shuffled tensor and the orderings used.
pub fn shuffled(t: &DenseTensor, seed: u64) -> (DenseTensor, PermutationSet) {
    let p = PermutationSet::random(t.dims(), seed);
    (t.apply_permutation(&p).expect("orderings match dims"), p)
}
