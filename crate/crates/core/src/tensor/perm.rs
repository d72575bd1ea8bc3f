use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Per-mode bijections mapping a reordered index to an original index,
/// with cached inverses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSet {
    perms: Vec<Vec<usize>>,
    inv: Vec<Vec<usize>>,
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

impl PermutationSet {
    pub fn new(perms: Vec<Vec<usize>>) -> Result<Self> {
        for (k, perm) in perms.iter().enumerate() {
            let mut seen = vec![false; perm.len()];
            for &p in perm {
                if p >= perm.len() || seen[p] {
                    return Err(Error::Argument(format!(
                        "mode {k} ordering is not a bijection on 0..{}",
                        perm.len()
                    )));
                }
                seen[p] = true;
            }
        }
        let inv = perms.iter().map(|p| invert(p)).collect();
        Ok(Self { perms, inv })
    }

    pub fn identity(dims: &[usize]) -> Self {
        let perms: Vec<Vec<usize>> = dims.iter().map(|&n| (0..n).collect()).collect();
        Self {
            inv: perms.clone(),
            perms,
        }
    }

    /// Uniformly random orderings, deterministic in `seed`.
    pub fn random(dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = dims
            .iter()
            .map(|&n| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        Self::new(perms).expect("shuffled ranges are bijections")
    }

    pub fn order(&self) -> usize {
        self.perms.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.perms.iter().map(Vec::len).collect()
    }

    /// Reordered index → original index for `mode`.
    pub fn perm(&self, mode: usize) -> &[usize] {
        &self.perms[mode]
    }

    /// Original index → reordered index for `mode`.
    pub fn inv(&self, mode: usize) -> &[usize] {
        &self.inv[mode]
    }

    pub fn perms(&self) -> &[Vec<usize>] {
        &self.perms
    }

    pub fn inverse(&self) -> PermutationSet {
        Self {
            perms: self.inv.clone(),
            inv: self.perms.clone(),
        }
    }

    /// Exchanges the original indices assigned to reordered positions `i` and `j`.
    pub fn swap(&mut self, mode: usize, i: usize, j: usize) {
        let perm = &mut self.perms[mode];
        perm.swap(i, j);
        let (a, b) = (perm[i], perm[j]);
        self.inv[mode][a] = i;
        self.inv[mode][b] = j;
    }

    /// Maps reordered coordinates to original coordinates.
    #[inline]
    pub fn map_into(&self, pos: &[usize], out: &mut [usize]) {
        for (k, (&p, o)) in pos.iter().zip(out.iter_mut()).enumerate() {
            *o = self.perms[k][p];
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(|p| p.iter().enumerate().all(|(i, &x)| i == x))
    }
}
