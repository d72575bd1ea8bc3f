//! Lossy compression of dense tensors.
//!
//! The pipeline reorders the mode indices of the input so that similar slices
//! sit next to each other, folds the reordered tensor into a higher-order
//! tensor with short modes, and fits it with a neural tensor-train model whose
//! TT cores are generated per entry by an LSTM. The compressed artifact holds
//! the model parameters, the bit-packed orderings and the folding matrix.

pub mod bench;
pub mod bytes;
pub mod codec;
pub mod error;
pub mod folding;
pub mod nttd;
pub mod reorder;
mod rng;
pub mod synth;
pub mod trainer;
pub mod ttd;
pub mod tensor;

pub use error::{Error, Result};
pub use folding::FoldingSpec;
pub use nttd::{NttdHyper, NttdModel};
pub use tensor::{DenseTensor, PermutationSet};
