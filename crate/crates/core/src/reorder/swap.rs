//! Loss deltas of candidate swaps and the order-update pass.

use rand::seq::index;
use rayon::prelude::*;

use super::{propose_pairs_lsh, rest_offsets};
use crate::folding::FoldingSpec;
use crate::nttd::{NttdModel, Tape};
use crate::rng::rng_for;
use crate::tensor::{DenseTensor, PermutationSet};

/// Default number of entries per slice evaluated for one swap delta.
pub const DEFAULT_SAMPLE_BUDGET: usize = 4096;

const LOSS_CHUNK: usize = 4096;

/// The squared-error objective of a model on a tensor seen through an ordering.
///
/// Position `pos` of the reordered tensor is modelled by
/// `model(fold(pos))` against the target `tensor(π(pos))`.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub tensor: &'a DenseTensor,
    pub model: &'a NttdModel,
    pub spec: &'a FoldingSpec,
}

/// Per-mode data shared by all delta evaluations of that mode.
struct ModeView {
    mode: usize,
    offsets: Vec<usize>,
    rest_dims: Vec<usize>,
}

impl ModeView {
    fn new(t: &DenseTensor, p: &PermutationSet, mode: usize) -> Self {
        Self {
            mode,
            offsets: rest_offsets(t, p, mode),
            rest_dims: (0..t.order()).filter(|&k| k != mode).map(|k| t.dims()[k]).collect(),
        }
    }

    /// Writes the reordered coordinates of rest position `r` into `pos`, leaving `pos[mode]`.
    fn fill_rest(&self, mut r: usize, pos: &mut [usize]) {
        let mut j = self.rest_dims.len();
        for k in (0..pos.len()).rev() {
            if k == self.mode {
                continue;
            }
            j -= 1;
            pos[k] = r % self.rest_dims[j];
            r /= self.rest_dims[j];
        }
    }
}

struct Scratch {
    tape: Tape,
    pos: Vec<usize>,
    fidx: Vec<usize>,
}

impl<'a> Objective<'a> {
    pub fn new(tensor: &'a DenseTensor, model: &'a NttdModel, spec: &'a FoldingSpec) -> Self {
        Self { tensor, model, spec }
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            tape: self.model.new_tape(),
            pos: vec![0; self.tensor.order()],
            fidx: vec![0; self.spec.folded_order()],
        }
    }

    fn model_at(&self, s: &mut Scratch) -> f64 {
        self.spec.fold_into(&s.pos, &mut s.fidx);
        self.model.forward(&s.fidx, &mut s.tape)
    }

    /// Total squared error over every entry.
    pub fn loss(&self, p: &PermutationSet) -> f64 {
        let t = self.tensor;
        let chunks: Vec<f64> = (0..t.len().div_ceil(LOSS_CHUNK))
            .into_par_iter()
            .map_init(
                || (self.scratch(), vec![0usize; t.order()]),
                |(s, orig), c| {
                    let mut sse = 0.0;
                    for flat in c * LOSS_CHUNK..((c + 1) * LOSS_CHUNK).min(t.len()) {
                        t.unravel_into(flat, &mut s.pos);
                        p.map_into(&s.pos, orig);
                        let err = self.model_at(s) - t.values()[t.offset_unchecked(orig)];
                        sse += err * err;
                    }
                    sse
                },
            )
            .collect();
        chunks.iter().sum()
    }

    /// Change in the loss if the slices at reordered positions `pair` along
    /// `mode` were exchanged.
    ///
    /// Slices with more than `sample_budget` entries are estimated from one
    /// uniform subset of rest positions (the same for both terms), scaled to
    /// the full slice; otherwise the delta is exact.
    pub fn swap_delta(&self, p: &PermutationSet, mode: usize, pair: (usize, usize), sample_budget: usize, seed: u64) -> f64 {
        let view = ModeView::new(self.tensor, p, mode);
        self.delta_with(&view, p, pair, sample_budget, seed, &mut self.scratch())
    }

    fn delta_with(
        &self,
        view: &ModeView,
        p: &PermutationSet,
        (i, j): (usize, usize),
        sample_budget: usize,
        seed: u64,
        s: &mut Scratch,
    ) -> f64 {
        let t = self.tensor;
        let mode = view.mode;
        let stride = t.strides()[mode];
        let (base_i, base_j) = (p.perm(mode)[i] * stride, p.perm(mode)[j] * stride);
        let values = t.values();
        let slice_len = view.offsets.len();
        let term = |r: usize, s: &mut Scratch| {
            view.fill_rest(r, &mut s.pos);
            s.pos[mode] = i;
            let m_i = self.model_at(s);
            s.pos[mode] = j;
            let m_j = self.model_at(s);
            let a = values[base_i + view.offsets[r]];
            let b = values[base_j + view.offsets[r]];
            // (m_i-b)² + (m_j-a)² - (m_i-a)² - (m_j-b)²
            2.0 * (a - b) * (m_i - m_j)
        };
        if slice_len <= sample_budget {
            (0..slice_len).map(|r| term(r, s)).sum()
        } else {
            let mut rng = rng_for(seed, &[mode as u64, i as u64, j as u64]);
            let picked = index::sample(&mut rng, slice_len, sample_budget.max(1));
            let sum: f64 = picked.iter().map(|r| term(r, s)).sum();
            sum * slice_len as f64 / picked.len() as f64
        }
    }
}

/// One order-update pass: for each mode in turn, propose disjoint pairs,
/// evaluate their deltas in parallel and apply every swap with a negative
/// delta. Returns the number of swaps applied per mode.
pub fn update_orders(obj: &Objective<'_>, p: &mut PermutationSet, seed: u64, sample_budget: usize) -> Vec<usize> {
    let mut swaps = Vec::with_capacity(obj.tensor.order());
    for mode in 0..obj.tensor.order() {
        let candidates = propose_pairs_lsh(obj.tensor, p, mode, seed);
        if candidates.pairs.is_empty() {
            swaps.push(0);
            continue;
        }
        let view = ModeView::new(obj.tensor, p, mode);
        let current = &*p;
        let deltas: Vec<f64> = candidates
            .pairs
            .par_iter()
            .map_init(
                || obj.scratch(),
                |s, &pair| obj.delta_with(&view, current, pair, sample_budget, seed, s),
            )
            .collect();
        let mut applied = 0;
        for (&(i, j), &delta) in candidates.pairs.iter().zip(&deltas) {
            if delta < 0.0 {
                p.swap(mode, i, j);
                applied += 1;
            }
        }
        swaps.push(applied);
    }
    swaps
}
