//! Neural tensor-train decomposition.
//!
//! An entry of the folded tensor at `(i_1, .., i_d')` is approximated by a
//! product of TT cores `T_1 T_2 .. T_d'` that are generated per entry: each
//! coordinate is embedded, the embeddings are fed through an LSTM cell, and
//! linear heads turn the hidden states into a `1×R` core, `R×R` middle cores
//! and an `R×1` core. Folded modes of equal length share one embedding table.
//!
//! All parameters live in one flat `f64` buffer, in this order:
//!
//! 1. embedding tables, one `L×h` table per distinct folded length `L`,
//!    in order of first appearance;
//! 2. LSTM input weights `4h×h`, recurrent weights `4h×h`, bias `4h`
//!    (gate order input, forget, cell, output);
//! 3. first head `R×h` and bias `R`;
//! 4. middle head `R²×h` and bias `R²` (row `a·R + b` is core entry `(a, b)`);
//! 5. last head `R×h` and bias `R`.

mod adam;
mod cell;

pub use adam::Adam;
pub use cell::{Tape, TtCoreChain};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::folding::FoldingSpec;
use crate::tensor::DenseTensor;

/// Entries handled by one worker before gradients are reduced.
const GRAD_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NttdHyper {
    pub rank: usize,
    pub hidden: usize,
    pub folded_dims: Vec<usize>,
}

impl NttdHyper {
    pub fn new(rank: usize, hidden: usize, folded_dims: Vec<usize>) -> Result<Self> {
        if rank == 0 || hidden == 0 {
            return Err(Error::Argument(format!(
                "rank and hidden size must be positive, got R={rank}, h={hidden}"
            )));
        }
        if folded_dims.len() < 2 || folded_dims.contains(&0) {
            return Err(Error::Argument(format!(
                "folded dims {folded_dims:?} must have at least two positive modes"
            )));
        }
        Ok(Self {
            rank,
            hidden,
            folded_dims,
        })
    }

    pub fn folded_order(&self) -> usize {
        self.folded_dims.len()
    }

    /// Distinct folded mode lengths in order of first appearance.
    pub fn distinct_lengths(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &n in &self.folded_dims {
            if !out.contains(&n) {
                out.push(n);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    /// Upper bound `12·h·(h + R² + Σ distinct L)` on the parameter count.
    pub fn theoretical_size_bound(&self) -> usize {
        let (h, r) = (self.hidden, self.rank);
        let lengths: usize = self.distinct_lengths().iter().sum();
        12 * h * (h + r * r + lengths)
    }
}

/// Offsets of each parameter block inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub rank: usize,
    pub hidden: usize,
    /// Offset of the embedding table used by each folded mode.
    pub table_of_mode: Vec<usize>,
    pub tables_end: usize,
    pub w_ih: usize,
    pub w_hh: usize,
    pub b_cell: usize,
    pub w_first: usize,
    pub b_first: usize,
    pub w_mid: usize,
    pub b_mid: usize,
    pub w_last: usize,
    pub b_last: usize,
    pub total: usize,
}

impl Layout {
    fn new(hyper: &NttdHyper) -> Self {
        let (h, r) = (hyper.hidden, hyper.rank);
        let lengths = hyper.distinct_lengths();
        let mut table_offsets = Vec::with_capacity(lengths.len());
        let mut off = 0;
        for &n in &lengths {
            table_offsets.push(off);
            off += n * h;
        }
        let table_of_mode = hyper
            .folded_dims
            .iter()
            .map(|n| table_offsets[lengths.iter().position(|l| l == n).unwrap()])
            .collect();
        let tables_end = off;
        let w_ih = off;
        let w_hh = w_ih + 4 * h * h;
        let b_cell = w_hh + 4 * h * h;
        let w_first = b_cell + 4 * h;
        let b_first = w_first + r * h;
        let w_mid = b_first + r;
        let b_mid = w_mid + r * r * h;
        let w_last = b_mid + r * r;
        let b_last = w_last + r * h;
        let total = b_last + r;
        Self {
            rank: r,
            hidden: h,
            table_of_mode,
            tables_end,
            w_ih,
            w_hh,
            b_cell,
            w_first,
            b_first,
            w_mid,
            b_mid,
            w_last,
            b_last,
            total,
        }
    }
}

/// An NTTD model: hyperparameters plus the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct NttdModel {
    hyper: NttdHyper,
    layout: Layout,
    params: Vec<f64>,
}

impl NttdModel {
    /// Random initialization: embeddings ~ N(0, 1), every other weight and bias
    /// ~ U(-1/√h, 1/√h).
    pub fn random(hyper: NttdHyper, seed: u64) -> Self {
        let layout = Layout::new(&hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hyper.hidden as f64).sqrt();
        let mut params = Vec::with_capacity(layout.total);
        for _ in 0..layout.tables_end {
            params.push(StandardNormal.sample(&mut rng));
        }
        for _ in layout.tables_end..layout.total {
            params.push(rng.random_range(-bound..bound));
        }
        Self {
            hyper,
            layout,
            params,
        }
    }

    pub fn from_params(hyper: NttdHyper, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(&hyper);
        if params.len() != layout.total {
            return Err(Error::Argument(format!(
                "model needs {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("non-finite model parameter".into()));
        }
        Ok(Self {
            hyper,
            layout,
            params,
        })
    }

    pub fn hyper(&self) -> &NttdHyper {
        &self.hyper
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn new_tape(&self) -> Tape {
        Tape::new(&self.hyper)
    }

    /// Zeroes every weight and sets the biases so that every generated core
    /// chain is `1ᵀ · I · .. · I · 1`.
    pub fn set_constant_chain(&mut self) {
        let l = &self.layout;
        let r = l.rank;
        self.params.fill(0.0);
        self.params[l.b_first..l.b_first + r].fill(1.0);
        for a in 0..r {
            self.params[l.b_mid + a * r + a] = 1.0;
        }
        self.params[l.b_last..l.b_last + r].fill(1.0);
    }

    /// Evaluates the model at a folded index, recording activations in `tape`.
    pub fn forward(&self, fidx: &[usize], tape: &mut Tape) -> f64 {
        cell::forward(&self.layout, &self.params, fidx, tape)
    }

    /// Checked single-entry evaluation.
    pub fn eval(&self, fidx: &[usize]) -> Result<f64> {
        if fidx.len() != self.hyper.folded_order()
            || fidx.iter().zip(&self.hyper.folded_dims).any(|(i, n)| i >= n)
        {
            return Err(Error::Index(format!(
                "folded index {fidx:?} invalid for folded dims {:?}",
                self.hyper.folded_dims
            )));
        }
        let mut tape = self.new_tape();
        Ok(self.forward(fidx, &mut tape))
    }

    /// Adds `upstream · ∂value/∂θ` for the entry recorded in `tape` into `grads`.
    pub fn backward(&self, tape: &mut Tape, upstream: f64, grads: &mut [f64]) {
        cell::backward(&self.layout, &self.params, tape, upstream, grads);
    }

    /// Mean squared error over a batch and its exact gradient.
    ///
    /// `fidx` holds the folded indices back to back (`targets.len() × d'`).
    /// Entries are split into fixed chunks that may run in parallel; chunk
    /// results are summed sequentially in chunk order, so the result does not
    /// depend on the thread count.
    pub fn batch_loss_and_grads(&self, fidx: &[usize], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        let dp = self.hyper.folded_order();
        if targets.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        if fidx.len() != targets.len() * dp {
            return Err(Error::Argument(format!(
                "batch has {} targets but {} index coordinates",
                targets.len(),
                fidx.len()
            )));
        }
        let scale = 2.0 / targets.len() as f64;
        let partials: Vec<(f64, Vec<f64>)> = fidx
            .par_chunks(GRAD_CHUNK * dp)
            .zip(targets.par_chunks(GRAD_CHUNK))
            .map(|(idx_chunk, tgt_chunk)| {
                let mut tape = self.new_tape();
                let mut grads = vec![0.0; self.params.len()];
                let mut sse = 0.0;
                for (fi, &y) in idx_chunk.chunks_exact(dp).zip(tgt_chunk) {
                    let err = self.forward(fi, &mut tape) - y;
                    sse += err * err;
                    self.backward(&mut tape, scale * err, &mut grads);
                }
                (sse, grads)
            })
            .collect();
        let mut grads = vec![0.0; self.params.len()];
        let mut sse = 0.0;
        for (s, g) in partials {
            sse += s;
            for (a, b) in grads.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((sse / targets.len() as f64, grads))
    }
}

/// A tensor produced by a randomly initialized model on the auto folding of
/// `dims`, evaluated on every non-padding cell with identity orderings.
pub fn generate_random_nttd_tensor(rank: usize, hidden: usize, dims: &[usize], seed: u64) -> Result<DenseTensor> {
    let spec = FoldingSpec::auto(dims)?;
    let hyper = NttdHyper::new(rank, hidden, spec.folded_dims().to_vec())?;
    let model = NttdModel::random(hyper, seed);
    evaluate_on_dims(&model, &spec)
}

/// Evaluates `model` at every original index of `spec` (identity orderings).
pub fn evaluate_on_dims(model: &NttdModel, spec: &FoldingSpec) -> Result<DenseTensor> {
    let dims = spec.dims().to_vec();
    let mut tape = model.new_tape();
    let mut fidx = vec![0; spec.folded_order()];
    DenseTensor::from_fn(&dims, |idx| {
        spec.fold_into(idx, &mut fidx);
        model.forward(&fidx, &mut tape)
    })
}
