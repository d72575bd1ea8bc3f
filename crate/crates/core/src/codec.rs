//! The compressed artifact and its `.tcc` file format.
//!
//! All integers and floats are little-endian.
//!
//! | bytes  | field |
//! |--------|-------|
//! | 4      | magic `TCCZ` |
//! | 2      | version, u16 = 1 |
//! | 2      | order d, u16 |
//! | 8·d    | dims, u64 each |
//! | 2      | folded order d', u16 |
//! | d·d'   | folding factors, u8 each, row by row |
//! | 4      | rank R, u32 |
//! | 4      | hidden size h, u32 |
//! | 8      | standardization mean, f64 |
//! | 8      | standardization std, f64 |
//! | 8      | seed, u64 |
//! | 1      | precision: 0 = binary64, 1 = binary32 |
//! | 8·P or 4·P | model parameters in layout order |
//! | …      | per mode, `N_k` indices at `ceil(log2 N_k)` bits, MSB-first, padded to a byte |

use rayon::prelude::*;

use crate::bytes::{index_bits, pack_bits, packed_len, unpack_bits, ByteReader};
use crate::error::{Error, Result};
use crate::folding::FoldingSpec;
use crate::nttd::{NttdHyper, NttdModel};
use crate::tensor::{DenseTensor, PermutationSet, MAX_ORDER};

pub const TCC_MAGIC: &[u8; 4] = b"TCCZ";
pub const TCC_VERSION: u16 = 1;

const RECONSTRUCT_CHUNK: usize = 4096;

/// Storage precision of the model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }

    pub fn bytes_per_param(self) -> usize {
        match self {
            Precision::F64 => 8,
            Precision::F32 => 4,
        }
    }
}

/// Everything needed to reconstruct a compressed tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedArtifact {
    spec: FoldingSpec,
    model: NttdModel,
    perms: PermutationSet,
    mean: f64,
    std: f64,
    seed: u64,
    precision: Precision,
}

/// Byte counts of the parts of a serialized artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub header: usize,
    pub model: usize,
    pub perms: usize,
    pub total: usize,
}

impl SizeReport {
    /// Model plus orderings, without the header.
    pub fn payload(&self) -> usize {
        self.model + self.perms
    }
}

impl CompressedArtifact {
    pub fn new(spec: FoldingSpec, model: NttdModel, perms: PermutationSet, mean: f64, std: f64, seed: u64) -> Result<Self> {
        if model.hyper().folded_dims != spec.folded_dims() {
            return Err(Error::Argument(format!(
                "model folded dims {:?} differ from folding {:?}",
                model.hyper().folded_dims,
                spec.folded_dims()
            )));
        }
        if perms.dims() != spec.dims() {
            return Err(Error::Argument(format!(
                "orderings for dims {:?} do not match tensor dims {:?}",
                perms.dims(),
                spec.dims()
            )));
        }
        if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
            return Err(Error::Argument(format!("invalid standardization ({mean}, {std})")));
        }
        Ok(Self {
            spec,
            model,
            perms,
            mean,
            std,
            seed,
            precision: Precision::F64,
        })
    }

    /// Switches the stored precision. Converting to binary32 rounds the
    /// in-memory parameters so that the artifact equals its decoded file.
    pub fn with_precision(mut self, precision: Precision) -> Self {
        if precision == Precision::F32 {
            for p in self.model.params_mut() {
                *p = *p as f32 as f64;
            }
        }
        self.precision = precision;
        self
    }

    pub fn spec(&self) -> &FoldingSpec {
        &self.spec
    }

    pub fn model(&self) -> &NttdModel {
        &self.model
    }

    pub fn perms(&self) -> &PermutationSet {
        &self.perms
    }

    pub fn dims(&self) -> &[usize] {
        self.spec.dims()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Approximates one original entry without materializing the tensor.
    pub fn reconstruct_entry(&self, idx: &[usize]) -> Result<f64> {
        let dims = self.dims();
        if idx.len() != dims.len() || idx.iter().zip(dims).any(|(i, n)| i >= n) {
            return Err(Error::Index(format!("index {idx:?} out of bounds for dims {dims:?}")));
        }
        let mut tape = self.model.new_tape();
        let mut pos = vec![0; dims.len()];
        let mut fidx = vec![0; self.spec.folded_order()];
        Ok(self.entry_with(idx, &mut pos, &mut fidx, &mut tape))
    }

    /// Approximates many entries; `idx` holds the multi-indices back to back.
    pub fn reconstruct_entries(&self, idx: &[usize]) -> Result<Vec<f64>> {
        let dims = self.dims();
        let d = dims.len();
        if !idx.len().is_multiple_of(d) {
            return Err(Error::Index(format!("{} coordinates do not form {d}-indices", idx.len())));
        }
        let mut tape = self.model.new_tape();
        let mut pos = vec![0; d];
        let mut fidx = vec![0; self.spec.folded_order()];
        idx.chunks_exact(d)
            .map(|one| {
                if one.iter().zip(dims).any(|(i, n)| i >= n) {
                    return Err(Error::Index(format!("index {one:?} out of bounds for dims {dims:?}")));
                }
                Ok(self.entry_with(one, &mut pos, &mut fidx, &mut tape))
            })
            .collect()
    }

    #[inline]
    fn entry_with(&self, idx: &[usize], pos: &mut [usize], fidx: &mut [usize], tape: &mut crate::nttd::Tape) -> f64 {
        for (k, (p, &i)) in pos.iter_mut().zip(idx).enumerate() {
            *p = self.perms.inv(k)[i];
        }
        self.spec.fold_into(pos, fidx);
        self.model.forward(fidx, tape) * self.std + self.mean
    }

    /// Approximates every original entry.
    pub fn reconstruct_full(&self) -> Result<DenseTensor> {
        let dims = self.dims().to_vec();
        let len: usize = dims.iter().product();
        let chunks: Vec<Vec<f64>> = (0..len.div_ceil(RECONSTRUCT_CHUNK))
            .into_par_iter()
            .map_init(
                || {
                    (
                        self.model.new_tape(),
                        vec![0; dims.len()],
                        vec![0; dims.len()],
                        vec![0; self.spec.folded_order()],
                    )
                },
                |(tape, idx, pos, fidx), c| {
                    let range = c * RECONSTRUCT_CHUNK..((c + 1) * RECONSTRUCT_CHUNK).min(len);
                    range
                        .map(|flat| {
                            let mut rest = flat;
                            for k in (0..dims.len()).rev() {
                                idx[k] = rest % dims[k];
                                rest /= dims[k];
                            }
                            self.entry_with(idx, pos, fidx, tape)
                        })
                        .collect()
                },
            )
            .collect();
        DenseTensor::new(dims, chunks.concat())
    }

    pub fn header_len(&self) -> usize {
        let d = self.spec.order();
        43 + 8 * d + d * self.spec.folded_order()
    }

    pub fn report_size(&self) -> SizeReport {
        let header = self.header_len();
        let model = self.precision.bytes_per_param() * self.model.param_count();
        let perms = permutation_bytes(self.dims());
        SizeReport {
            header,
            model,
            perms,
            total: header + model + perms,
        }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let size = self.report_size();
        let mut out = Vec::with_capacity(size.total);
        out.extend_from_slice(TCC_MAGIC);
        out.extend_from_slice(&TCC_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.spec.order() as u16).to_le_bytes());
        for &n in self.dims() {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.spec.folded_order() as u16).to_le_bytes());
        for row in self.spec.factors() {
            out.extend(row.iter().map(|&f| f as u8));
        }
        let hyper = self.model.hyper();
        out.extend_from_slice(&(hyper.rank as u32).to_le_bytes());
        out.extend_from_slice(&(hyper.hidden as u32).to_le_bytes());
        out.extend_from_slice(&self.mean.to_le_bytes());
        out.extend_from_slice(&self.std.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(self.precision.tag());
        match self.precision {
            Precision::F64 => self.model.params().iter().for_each(|p| out.extend_from_slice(&p.to_le_bytes())),
            Precision::F32 => self
                .model
                .params()
                .iter()
                .for_each(|&p| out.extend_from_slice(&(p as f32).to_le_bytes())),
        }
        for perm in self.perms.perms() {
            pack_bits(perm, index_bits(perm.len()), &mut out);
        }
        debug_assert_eq!(out.len(), size.total);
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(TCC_MAGIC)?;
        let at = r.offset();
        let version = r.u16("version")?;
        if version != TCC_VERSION {
            return Err(Error::format(at, format!("unsupported .tcc version {version}")));
        }
        let at = r.offset();
        let d = r.u16("order")? as usize;
        if d == 0 || d > MAX_ORDER {
            return Err(Error::format(at, format!("order {d} out of range 1..={MAX_ORDER}")));
        }
        let mut dims = Vec::with_capacity(d);
        for _ in 0..d {
            dims.push(r.length("mode length", u32::MAX as u64)?);
        }
        let at = r.offset();
        let d_prime = r.u16("folded order")? as usize;
        if d_prime <= d {
            return Err(Error::format(at, format!("folded order {d_prime} not above order {d}")));
        }
        let at = r.offset();
        let raw = r.take(d * d_prime, "folding factors")?;
        let factors = raw.chunks(d_prime).map(|row| row.iter().map(|&f| f as usize).collect()).collect();
        let spec = FoldingSpec::from_factors(&dims, factors).map_err(|e| Error::format(at, e.to_string()))?;
        let at = r.offset();
        let rank = r.u32("rank")? as usize;
        let hidden = r.u32("hidden size")? as usize;
        let hyper = NttdHyper::new(rank, hidden, spec.folded_dims().to_vec()).map_err(|e| Error::format(at, e.to_string()))?;
        let mean = r.f64("mean")?;
        let std = r.f64("std")?;
        let seed = r.u64("seed")?;
        let at = r.offset();
        let precision = match r.u8("precision")? {
            0 => Precision::F64,
            1 => Precision::F32,
            other => return Err(Error::format(at, format!("unknown precision tag {other}"))),
        };
        let count = hyper.param_count();
        let at = r.offset();
        if count
            .checked_mul(precision.bytes_per_param())
            .is_none_or(|b| b > r.remaining())
        {
            return Err(Error::format(at, format!("truncated model blob of {count} parameters")));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(match precision {
                Precision::F64 => r.f64("parameter")?,
                Precision::F32 => r.f32("parameter")? as f64,
            });
        }
        let model = NttdModel::from_params(hyper, params).map_err(|e| Error::format(at, e.to_string()))?;
        let mut perms = Vec::with_capacity(d);
        for &n in &dims {
            let bits = index_bits(n);
            let block = r.take(packed_len(n, bits), "ordering")?;
            perms.push(unpack_bits(block, n, bits));
        }
        let at = r.offset();
        r.finish()?;
        let perms = PermutationSet::new(perms).map_err(|e| Error::format(at, e.to_string()))?;
        let mut a = Self::new(spec, model, perms, mean, std, seed).map_err(|e| Error::format(at, e.to_string()))?;
        a.precision = precision;
        Ok(a)
    }
}

/// `Σ_k ceil(N_k · ceil(log2 N_k) / 8)`.
pub fn permutation_bytes(dims: &[usize]) -> usize {
    dims.iter().map(|&n| packed_len(n, index_bits(n))).sum()
}
