//! Dense row-major tensors, reordering functions and the analysis metrics.
//!
//! Modes are numbered from 0. The last mode varies fastest in the flat
//! value buffer.

mod io;
mod metrics;
mod perm;

pub use io::{parse_text, read_tcn, read_tcn_file, write_tcn, write_tcn_file, TCN_MAGIC, TCN_VERSION};
pub use metrics::{fitness, mean_std, smoothness};
pub use perm::PermutationSet;

use crate::error::{Error, Result};

/// Largest tensor order accepted at ingestion.
pub const MAX_ORDER: usize = 8;

/// A d-order array of finite `f64` values stored in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

pub(crate) fn row_major_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    strides
}

pub(crate) fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_ORDER {
        return Err(Error::Argument(format!(
            "tensor order must be between 1 and {MAX_ORDER}, got {}",
            dims.len()
        )));
    }
    if let Some(k) = dims.iter().position(|&n| n == 0) {
        return Err(Error::Argument(format!("mode {k} has length 0")));
    }
    dims.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).ok_or_else(|| {
        Error::Argument(format!("tensor with dims {dims:?} has too many entries"))
    })
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if values.len() != len {
            return Err(Error::Argument(format!(
                "dims {dims:?} need {len} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite value {} at flat offset {pos}",
                values[pos]
            )));
        }
        let strides = row_major_strides(&dims);
        Ok(Self {
            dims,
            strides,
            values,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims)?;
        Self::new(dims.to_vec(), vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every index in row-major order.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f(&idx));
            increment_index(&mut idx, dims);
        }
        Self::new(dims.to_vec(), values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_mode_len(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(1)
    }

    /// Row-major offset of `idx`.
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dims.len() {
            return Err(Error::Index(format!(
                "index has {} coordinates, tensor has order {}",
                idx.len(),
                self.dims.len()
            )));
        }
        let mut off = 0;
        for (k, (&i, &n)) in idx.iter().zip(&self.dims).enumerate() {
            if i >= n {
                return Err(Error::Index(format!(
                    "coordinate {i} out of bounds for mode {k} of length {n}"
                )));
            }
            off += i * self.strides[k];
        }
        Ok(off)
    }

    /// Offset without bounds checks; `idx` must be valid.
    #[inline]
    pub(crate) fn offset_unchecked(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.values[self.offset(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Argument(format!("non-finite value {value}")));
        }
        let off = self.offset(idx)?;
        self.values[off] = value;
        Ok(())
    }

    /// Writes the coordinates of flat offset `flat` into `out`.
    pub fn unravel_into(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.dims.len()).rev() {
            out[k] = flat % self.dims[k];
            flat /= self.dims[k];
        }
    }

    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        self.unravel_into(flat, &mut out);
        out
    }

    /// Number of entries in one slice along `mode`.
    pub fn slice_len(&self, mode: usize) -> usize {
        self.values.len() / self.dims[mode]
    }

    /// Values of the slice `index` along `mode`, row-major over the remaining modes.
    pub fn slice_values(&self, mode: usize, index: usize) -> Result<Vec<f64>> {
        self.check_mode_index(mode, index)?;
        let stride = self.strides[mode];
        let block = stride * self.dims[mode];
        let outer = self.values.len() / block;
        let mut out = Vec::with_capacity(self.slice_len(mode));
        for o in 0..outer {
            let start = o * block + index * stride;
            out.extend_from_slice(&self.values[start..start + stride]);
        }
        Ok(out)
    }

    /// The sub-tensor with `mode` fixed to `index`. Slicing an order-1 tensor
    /// yields a single-entry tensor of dims `[1]`.
    pub fn slice(&self, mode: usize, index: usize) -> Result<DenseTensor> {
        let values = self.slice_values(mode, index)?;
        let mut dims: Vec<usize> = self
            .dims
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != mode)
            .map(|(_, &n)| n)
            .collect();
        if dims.is_empty() {
            dims.push(1);
        }
        DenseTensor::new(dims, values)
    }

    fn check_mode_index(&self, mode: usize, index: usize) -> Result<()> {
        if mode >= self.dims.len() {
            return Err(Error::Index(format!(
                "mode {mode} out of range for order {}",
                self.dims.len()
            )));
        }
        if index >= self.dims[mode] {
            return Err(Error::Index(format!(
                "slice index {index} out of bounds for mode {mode} of length {}",
                self.dims[mode]
            )));
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Materializes the reordered tensor: `result(i) = self(p(i))` entrywise.
    pub fn apply_permutation(&self, p: &PermutationSet) -> Result<DenseTensor> {
        if p.dims() != self.dims {
            return Err(Error::Argument(format!(
                "permutation set for dims {:?} applied to tensor with dims {:?}",
                p.dims(),
                self.dims
            )));
        }
        let d = self.dims.len();
        let mut pos = vec![0usize; d];
        let mut values = Vec::with_capacity(self.values.len());
        for _ in 0..self.values.len() {
            let off: usize = (0..d).map(|k| p.perm(k)[pos[k]] * self.strides[k]).sum();
            values.push(self.values[off]);
            increment_index(&mut pos, &self.dims);
        }
        Ok(DenseTensor {
            dims: self.dims.clone(),
            strides: self.strides.clone(),
            values,
        })
    }

    /// Applies `f` to every value, e.g. for standardization.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<DenseTensor> {
        DenseTensor::new(self.dims.clone(), self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Advances a row-major multi-index by one, wrapping to all zeros at the end.
#[inline]
pub(crate) fn increment_index(idx: &mut [usize], dims: &[usize]) {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}
